use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};

/// `base` with the entries of `file` laid over it, nested tables merged key
/// by key. Keys unknown to `T` are rejected by its deserializer.
pub fn layered<T: Serialize + DeserializeOwned>(base: &T, file: Option<Table>) -> Result<T> {
    let mut merged = Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(file) = file {
        merge(&mut merged, file);
    }
    merged.try_into().map_err(|e| Error::Config(e.to_string()))
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(dst)), Value::Table(src)) => merge(dst, src),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricParams;

    #[test]
    fn nested_tables_merge() {
        let file: Table = toml::from_str("alpha = 0.5").unwrap();
        let p: MetricParams = layered(&MetricParams::with_window(7), Some(file)).unwrap();
        assert_eq!((p.alpha, p.window), (0.5, 7));
    }
}
