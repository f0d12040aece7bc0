//! Result tables. Every number goes through [`sig12`], and nothing that
//! depends on wall-clock time is written, so equal inputs give equal bytes.

use std::io::{self, Write};

use serde_json::{json, Map, Value};

use emptywave_core::experiments::{ExperimentResult, SweepParam, SweepResult};

use crate::config::{Format, RunConfig};

/// Rounds to 12 significant digits and prints the shortest form of the
/// rounded value.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round12(x);
    if r == 0.0 {
        return "0".into();
    }
    format!("{r}")
}

fn round12(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let r: f64 = format!("{x:.11e}").parse().expect("float round trip");
    r + 0.0
}

fn json_num(x: f64) -> Value {
    serde_json::Number::from_f64(round12(x)).map_or(Value::Null, Value::Number)
}

pub struct Row {
    pub experiment: String,
    pub model: String,
    pub statistic: String,
    pub value: f64,
    pub stderr: f64,
    pub swept: Option<f64>,
}

fn rows_of(r: &ExperimentResult, swept: Option<f64>) -> Vec<Row> {
    r.models
        .iter()
        .flat_map(|m| {
            m.stats.iter().map(move |s| Row {
                experiment: r.spec.name.to_string(),
                model: m.model.to_string(),
                statistic: s.name.clone(),
                value: s.value,
                stderr: s.stderr,
                swept,
            })
        })
        .collect()
}

/// Data to be written for one command.
pub struct Report<'a> {
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub param: Option<SweepParam>,
    pub rows: Vec<Row>,
    pub notes: Vec<(String, Value)>,
}

impl<'a> Report<'a> {
    pub fn single(command: &'a str, config: &'a RunConfig, r: &ExperimentResult) -> Self {
        let mut rep = Self {
            command,
            config,
            param: None,
            rows: rows_of(r, None),
            notes: vec![],
        };
        rep.add_divergences(r, None);
        rep
    }

    pub fn sweep(config: &'a RunConfig, s: &SweepResult) -> Self {
        let mut rep = Self {
            command: "sweep",
            config,
            param: Some(s.param),
            rows: vec![],
            notes: vec![],
        };
        for (v, r) in s.values.iter().zip(&s.points) {
            rep.rows.extend(rows_of(r, Some(*v)));
            rep.add_divergences(r, Some(*v));
        }
        for f in &s.visibilities {
            rep.notes.push((
                "visibility".into(),
                json!({
                    "model": f.model.to_string(),
                    "statistic": f.statistic,
                    "harmonic": f.fit.harmonic,
                    "visibility": json_num(f.fit.visibility()),
                    "stderr": f.fit.visibility_stderr.map_or(Value::Null, json_num),
                }),
            ));
        }
        rep
    }

    fn add_divergences(&mut self, r: &ExperimentResult, at: Option<f64>) {
        for d in &r.divergences {
            let mut v = json!({
                "statistic": d.statistic,
                "models": [d.a.to_string(), d.b.to_string()],
                "difference": json_num(d.difference),
                "combined_stderr": json_num(d.combined_stderr),
            });
            if let (Some(p), Some(x)) = (self.param, at) {
                v[p.as_str()] = json_num(x);
            }
            self.notes.push(("divergence".into(), v));
        }
    }

    fn provenance(&self) -> Vec<(String, String)> {
        let c = self.config;
        let p = &c.params;
        let mut v = vec![
            ("generator".into(), format!("emptywave {}", env!("CARGO_PKG_VERSION"))),
            ("command".into(), self.command.into()),
            ("experiment".into(), c.experiment.to_string()),
            (
                "models".into(),
                c.models.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";"),
            ),
            ("samples".into(), c.samples.unwrap_or_default().to_string()),
            ("seed".into(), c.seed.to_string()),
            ("analytic".into(), c.analytic.to_string()),
            ("delta_theta".into(), p.delta_theta.to_string()),
            ("delta_phi".into(), sig12(p.delta_phi)),
            ("tau".into(), sig12(p.tau)),
            ("alpha".into(), sig12(p.alpha)),
            ("sigma".into(), sig12(p.sigma)),
        ];
        if let Some(s) = &c.sweep {
            v.push((
                "sweep".into(),
                format!("{} from {} to {} steps {}", s.param.as_str(), sig12(s.from), sig12(s.to), s.steps),
            ));
        }
        v
    }

    pub fn write(&self, format: Format, w: impl Write) -> io::Result<()> {
        match format {
            Format::Csv => self.write_csv(w),
            Format::Json => self.write_json(w),
        }
    }

    fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        for (k, v) in self.provenance() {
            writeln!(w, "# {k} = {v}")?;
        }
        for (k, v) in &self.notes {
            writeln!(w, "# {k} {}", serde_json::to_string(v)?)?;
        }
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["experiment", "model", "statistic", "value", "stderr"];
        if let Some(p) = self.param {
            header.push(p.as_str());
        }
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.experiment.clone(),
                r.model.clone(),
                r.statistic.clone(),
                sig12(r.value),
                sig12(r.stderr),
            ];
            if let Some(x) = r.swept {
                rec.push(sig12(x));
            }
            out.write_record(&rec)?;
        }
        out.flush()
    }

    fn write_json(&self, mut w: impl Write) -> io::Result<()> {
        let prov: Map<String, Value> = self
            .provenance()
            .into_iter()
            .map(|(k, v)| (k, Value::String(v)))
            .collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut o = json!({
                    "experiment": r.experiment,
                    "model": r.model,
                    "statistic": r.statistic,
                    "value": json_num(r.value),
                    "stderr": json_num(r.stderr),
                });
                if let (Some(p), Some(x)) = (self.param, r.swept) {
                    o[p.as_str()] = json_num(x);
                }
                o
            })
            .collect();
        let mut doc = json!({ "provenance": prov, "rows": rows });
        for (key, plural) in [("divergence", "divergences"), ("visibility", "visibilities")] {
            let items: Vec<&Value> = self.notes.iter().filter(|(k, _)| k == key).map(|(_, v)| v).collect();
            doc[plural] = json!(items);
        }
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)
    }
}

/// Aligned text table with one value column per model.
pub fn write_comparison(r: &ExperimentResult, mut w: impl Write) -> io::Result<()> {
    let names: Vec<&str> = r
        .models
        .first()
        .map(|m| m.stats.iter().map(|s| s.name.as_str()).collect())
        .unwrap_or_default();
    let width = names.iter().map(|n| n.len()).max().unwrap_or(9).max(9);
    write!(w, "{:width$}", "statistic")?;
    for m in &r.models {
        write!(w, "  {:>28}", m.model.to_string())?;
    }
    writeln!(w, "  divergent")?;
    for name in names {
        write!(w, "{name:width$}")?;
        for m in &r.models {
            let cell = m.stat(name).map_or(String::from("-"), |s| {
                if s.stderr > 0.0 {
                    format!("{} +- {}", sig6(s.value), sig6(s.stderr))
                } else {
                    sig6(s.value)
                }
            });
            write!(w, "  {cell:>28}")?;
        }
        let pairs: Vec<String> = r
            .divergences
            .iter()
            .filter(|d| d.statistic == name)
            .map(|d| format!("{}/{}", d.a, d.b))
            .collect();
        writeln!(w, "  {}", if pairs.is_empty() { "-".into() } else { pairs.join(" ") })?;
    }
    Ok(())
}

fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return sig12(x);
    }
    let r: f64 = format!("{x:.5e}").parse().expect("float round trip");
    format!("{}", r + 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(sig12(0.25), "0.25");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(-1e-300 * 0.0), "0");
        assert_eq!(sig12(f64::NAN), "NaN");
        assert_eq!(sig12(123456789.123456789), "123456789.123");
    }
}
