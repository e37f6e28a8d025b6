use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Fixed-step finite signal: `values[channel][step]`.
///
/// `V` is a plain scalar for monitoring and evaluation, or a tape value
/// holding one entry per batch element during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<V> {
    schema: Arc<[String]>,
    values: Vec<Vec<V>>,
    dt: f64,
}

impl<V> Trace<V> {
    pub fn new(schema: impl Into<Arc<[String]>>, values: Vec<Vec<V>>, dt: f64) -> Result<Self> {
        let schema = schema.into();
        if schema.len() != values.len() {
            return Err(Error::InvalidTrace(format!(
                "{} channel names but {} channels of data",
                schema.len(),
                values.len()
            )));
        }
        let Some(first) = values.first() else {
            return Err(Error::InvalidTrace("trace has no channels".into()));
        };
        let len = first.len();
        if len == 0 {
            return Err(Error::InvalidTrace("trace has no timesteps".into()));
        }
        if let Some((c, row)) = values.iter().enumerate().find(|(_, r)| r.len() != len) {
            return Err(Error::InvalidTrace(format!(
                "channel `{}` has {} samples, expected {len}",
                schema[c],
                row.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTrace(format!("dt must be positive, got {dt}")));
        }
        Ok(Trace { schema, values, dt })
    }

    /// Builds a trace from per-step state vectors.
    pub fn from_states(schema: impl Into<Arc<[String]>>, states: Vec<Vec<V>>, dt: f64) -> Result<Self> {
        let schema = schema.into();
        let n = schema.len();
        let mut values: Vec<Vec<V>> = (0..n).map(|_| Vec::with_capacity(states.len())).collect();
        for (t, s) in states.into_iter().enumerate() {
            if s.len() != n {
                return Err(Error::InvalidTrace(format!("state {t} has {} entries, expected {n}", s.len())));
            }
            for (c, v) in s.into_iter().enumerate() {
                values[c].push(v);
            }
        }
        Trace::new(schema, values, dt)
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<[String]> {
        self.schema.clone()
    }

    /// Number of timesteps.
    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channel(&self, c: usize) -> &[V] {
        &self.values[c]
    }

    pub fn channel_by_name(&self, name: &str) -> Option<&[V]> {
        self.schema.iter().position(|s| s == name).map(|c| self.channel(c))
    }

    pub fn at(&self, c: usize, t: usize) -> &V {
        &self.values[c][t]
    }

    pub fn values(&self) -> &[Vec<V>] {
        &self.values
    }
}

impl<V: Clone> Trace<V> {
    /// State vector at step `t`.
    pub fn state(&self, t: usize) -> Vec<V> {
        self.values.iter().map(|ch| ch[t].clone()).collect()
    }

    /// Steps `start..start + len` as a new trace.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return Err(Error::InvalidTrace(format!(
                "window {start}..{} outside trace of length {}",
                start + len,
                self.len()
            )));
        }
        let values = self.values.iter().map(|ch| ch[start..start + len].to_vec()).collect();
        Ok(Trace { schema: self.schema.clone(), values, dt: self.dt })
    }
}

impl<T: Scalar> Trace<T> {
    /// Parses the text trace format: a header line of channel names, one
    /// row per step separated by whitespace or commas, and an optional `# dt=<seconds>`
    /// comment (default 1). Other `#` lines and blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut schema: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<T>> = Vec::new();
        let mut dt = 1.0;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("dt=") {
                    dt = v.trim().parse().map_err(|_| {
                        Error::InvalidTrace(format!("line {}: bad dt value `{}`", ln + 1, v.trim()))
                    })?;
                }
                continue;
            }
            match &schema {
                None => schema = Some(fields(line).map(str::to_owned).collect()),
                Some(names) => {
                    let row = fields(line)
                        .map(|tok| {
                            tok.parse::<f64>()
                                .map(T::of)
                                .map_err(|_| Error::InvalidTrace(format!("line {}: bad number `{tok}`", ln + 1)))
                        })
                        .collect::<Result<Vec<T>>>()?;
                    if row.len() != names.len() {
                        return Err(Error::InvalidTrace(format!(
                            "line {}: {} values, expected {}",
                            ln + 1,
                            row.len(),
                            names.len()
                        )));
                    }
                    rows.push(row);
                }
            }
        }
        let schema = schema.ok_or_else(|| Error::InvalidTrace("missing header line".into()))?;
        if let Some(dup) = schema.iter().enumerate().find(|(i, s)| schema[..*i].contains(s)) {
            return Err(Error::InvalidTrace(format!("duplicate channel `{}`", dup.1)));
        }
        Trace::from_states(schema, rows, dt)
    }

    /// Inverse of [`Trace::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# dt={}", self.dt);
        let _ = writeln!(out, "{}", self.schema.join(" "));
        for t in 0..self.len() {
            let row: Vec<String> = self.values.iter().map(|ch| format!("{}", ch[t])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty())
}
