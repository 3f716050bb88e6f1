use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub name: String,
    pub value: f64,
    /// Items the value was computed over.
    pub count: usize,
}

/// Named metric values, printable as JSON or as an aligned table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: Vec<MetricEntry>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, value: f64, count: usize) -> &mut Self {
        self.metrics.push(MetricEntry { name: name.to_string(), value, count });
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let width = self.metrics.iter().map(|m| m.name.len()).max().unwrap_or(0).max("metric".len());
        let mut out = format!("{:<width$}  {:>10}  {:>7}\n", "metric", "value", "n");
        for m in &self.metrics {
            out.push_str(&format!("{:<width$}  {:>10.6}  {:>7}\n", m.name, m.value, m.count));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_aligned() {
        let mut r = MetricsReport::new();
        r.push("precision@1", 0.5, 4).push("r", 1.0, 4);
        let table = r.to_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[1], "precision@1    0.500000        4");
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
        assert_eq!(r.get("r"), Some(1.0));
    }
}
