//! Field sources: a file on disk or an inline generator spec.

use std::io::BufReader;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rhoblo::generators::{generate, GeneratorSpec};
use rhoblo::grid::{read_csv, read_field, GridBox, GridField};
use serde_json::{Map, Number, Value};

/// `kind` or `kind:key=value,key=value`; list values use `/` between
/// entries, e.g. `log-spike:point=0.1/0/0`.
pub fn parse_spec(text: &str) -> Result<GeneratorSpec> {
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut map = Map::new();
    map.insert("kind".into(), Value::String(kind.trim().to_string()));
    for pair in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("generator parameter `{pair}` is not key=value"))?;
        let value = if v.contains('/') {
            Value::Array(v.split('/').map(number).collect::<Result<_>>()?)
        } else {
            number(v)?
        };
        map.insert(k.trim().replace('-', "_"), value);
    }
    serde_json::from_value(Value::Object(map)).with_context(|| format!("generator spec `{text}`"))
}

fn number(s: &str) -> Result<Value> {
    let s = s.trim();
    if let Ok(i) = s.parse::<u64>() {
        return Ok(Value::Number(i.into()));
    }
    let x: f64 = s.parse().map_err(|_| anyhow!("`{s}` is not a number"))?;
    Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| anyhow!("`{s}` is not finite"))
}

fn looks_like_path(s: &str) -> bool {
    s.contains('/') && !s.contains(':') || s.ends_with(".rsf") || s.ends_with(".csv") || Path::new(s).is_file()
}

pub fn read_any(path: &Path) -> Result<GridField<f64>> {
    let field = if path.extension().is_some_and(|e| e == "csv") {
        let f = std::fs::File::open(path)?;
        read_csv(BufReader::new(f))
    } else {
        read_field(path)
    }
    .with_context(|| format!("reading field {}", path.display()))?;
    Ok(field)
}

/// A loaded or generated field, plus the generator's seminorm bound if any.
pub struct Loaded {
    pub field: GridField<f64>,
    pub dyadic_bound: Option<f64>,
}

pub fn load(source: &str, bx: &GridBox<f64>, counts: &[usize]) -> Result<Loaded> {
    if looks_like_path(source) {
        return Ok(Loaded {
            field: read_any(Path::new(source))?,
            dyadic_bound: None,
        });
    }
    let spec = parse_spec(source)?;
    let g = generate(&spec, bx, counts.to_vec()).with_context(|| format!("generating `{source}`"))?;
    Ok(Loaded {
        field: g.field,
        dyadic_bound: g.dyadic_bound,
    })
}

/// Every field of one run must sit on the same grid.
pub fn same_grid(a: &GridField<f64>, b: &GridField<f64>, what: &str) -> Result<()> {
    if !a.same_lattice(b) {
        bail!("{what} is not on the same grid as the function");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_round_trip() {
        assert_eq!(parse_spec("potential-one").unwrap(), GeneratorSpec::PotentialOne);
        assert_eq!(
            parse_spec("weight-power:gamma=4").unwrap(),
            GeneratorSpec::WeightPower { gamma: 4.0 }
        );
        assert_eq!(
            parse_spec("dyadic-martingale:seed=7,depth=3,step=1,density=0.5").unwrap(),
            GeneratorSpec::DyadicMartingale {
                seed: 7,
                depth: 3,
                step: 1.0,
                density: 0.5
            }
        );
        assert_eq!(
            parse_spec("log-spike:point=0.1/0/-0.5").unwrap(),
            GeneratorSpec::LogSpike {
                point: vec![0.1, 0.0, -0.5]
            }
        );
    }

    #[test]
    fn bad_specs_fail() {
        assert!(parse_spec("nope").is_err());
        assert!(parse_spec("weight-power").is_err());
        assert!(parse_spec("weight-power:gamma").is_err());
        assert!(parse_spec("weight-power:gamma=x").is_err());
    }
}
