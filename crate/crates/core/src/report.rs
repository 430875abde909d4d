//! Uniform record of a checked inequality.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::grid::{BallSpec, CubeSpec, Lattice, Region};
use crate::scalar::Real;

/// Where a ratio was attained.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Witness {
    Cube {
        lo: Vec<usize>,
        cells: Vec<usize>,
        center: Vec<f64>,
        side: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Pair {
        x: Vec<f64>,
        y: Vec<f64>,
    },
    Point {
        x: Vec<f64>,
    },
    Lambda {
        lambda: f64,
    },
    Generation {
        k: usize,
    },
    Label {
        label: String,
    },
    /// A named step of a chain, evaluated at `at`.
    Step {
        step: String,
        at: Box<Witness>,
    },
}

fn to_f64<T: Real>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}

impl Witness {
    pub fn cube<T: Real>(q: &CubeSpec, lat: &Lattice<T>) -> Self {
        Witness::Cube {
            lo: q.lo.clone(),
            cells: q.cells.clone(),
            center: to_f64(&q.center(lat)),
            side: q.side(lat).as_f64(),
        }
    }

    pub fn ball<T: Real>(b: &BallSpec<T>) -> Self {
        Witness::Ball {
            center: to_f64(&b.center),
            radius: b.radius.as_f64(),
        }
    }

    pub fn region<T: Real>(r: &Region<T>, lat: &Lattice<T>) -> Self {
        match r {
            Region::Cube(q) => Self::cube(q, lat),
            Region::Ball(b) => Self::ball(b),
        }
    }

    pub fn pair<T: Real>(x: &[T], y: &[T]) -> Self {
        Witness::Pair {
            x: to_f64(x),
            y: to_f64(y),
        }
    }

    pub fn point<T: Real>(x: &[T]) -> Self {
        Witness::Point { x: to_f64(x) }
    }

    pub fn label(s: impl Into<String>) -> Self {
        Witness::Label { label: s.into() }
    }

    pub fn step(name: impl Into<String>, at: Witness) -> Self {
        Witness::Step {
            step: name.into(),
            at: Box::new(at),
        }
    }
}

/// One row of a ratio table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckItem {
    pub witness: Witness,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// `lhs / rhs`, with `0/0 = 0` and `x/0 = inf` for `x > 0`.
pub fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl CheckItem {
    pub fn new(witness: Witness, lhs: f64, rhs: f64) -> Self {
        Self {
            witness,
            lhs,
            rhs,
            ratio: ratio(lhs, rhs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementPoint {
    pub label: String,
    pub fitted: f64,
    /// Relative change from the previous point.
    pub drift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub params: BTreeMap<String, f64>,
    pub items: Vec<CheckItem>,
    /// Largest ratio in the table (0 for an empty table).
    pub fitted: f64,
    /// Declared bound on every ratio; `None` means only finiteness is required.
    pub bound: Option<f64>,
    pub tolerance: f64,
    pub witness: Option<Witness>,
    pub violations: usize,
    pub passed: bool,
    pub refinement: Vec<RefinementPoint>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(check: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            params: BTreeMap::new(),
            items: Vec::new(),
            fitted: 0.0,
            bound: None,
            tolerance: 0.0,
            witness: None,
            violations: 0,
            passed: true,
            refinement: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn set_param(&mut self, key: &str, value: f64) {
        self.params.insert(key.to_string(), value);
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    /// Every ratio must be at most `bound * (1 + tolerance)`.
    pub fn bounded(self, items: Vec<CheckItem>, bound: f64, tolerance: f64) -> Self {
        self.finish(items, Some(bound), tolerance)
    }

    /// Ratios only need to be finite.
    pub fn fitted_only(self, items: Vec<CheckItem>) -> Self {
        self.finish(items, None, 0.0)
    }

    fn finish(mut self, items: Vec<CheckItem>, bound: Option<f64>, tolerance: f64) -> Self {
        let mut fitted = 0.0;
        let mut witness = None;
        let mut violations = 0;
        for it in &items {
            let bad = match bound {
                Some(b) => !(it.ratio <= b * (1.0 + tolerance)),
                None => !it.ratio.is_finite(),
            };
            if bad {
                violations += 1;
            }
            // strict comparison keeps the first maximiser; NaN sticks
            let better = witness.is_none() || it.ratio > fitted || (it.ratio.is_nan() && !fitted.is_nan());
            if better {
                fitted = it.ratio;
                witness = Some(it.witness.clone());
            }
        }
        self.fitted = fitted;
        self.witness = witness;
        self.bound = bound;
        self.tolerance = tolerance;
        self.violations = violations;
        self.passed = violations == 0;
        self.items = items;
        self
    }

    /// Combines per-resolution reports into one: the last stage's table,
    /// plus a trace of fitted constants. Fails when any stage fails or two
    /// successive fitted constants differ by more than `drift_tol`.
    pub fn with_refinement(stages: Vec<(String, CheckReport)>, drift_tol: f64) -> CheckReport {
        assert!(!stages.is_empty(), "refinement needs at least one stage");
        let mut trace = Vec::with_capacity(stages.len());
        let mut ok = true;
        let mut prev: Option<f64> = None;
        for (label, r) in &stages {
            ok &= r.passed && r.fitted.is_finite();
            let drift = prev.map(|p| {
                let scale = p.abs().max(r.fitted.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (r.fitted - p).abs() / p.abs().max(f64::MIN_POSITIVE)
                }
            });
            if let Some(dr) = drift {
                ok &= dr <= drift_tol;
            }
            trace.push(RefinementPoint {
                label: label.clone(),
                fitted: r.fitted,
                drift,
            });
            prev = Some(r.fitted);
        }
        let (_, mut last) = stages.into_iter().last().unwrap();
        last.refinement = trace;
        last.passed = ok;
        last.set_param("drift_tolerance", drift_tol);
        last
    }

    /// One line per table row: `lhs,rhs,ratio,witness-json`.
    pub fn items_csv(&self) -> String {
        let mut out = String::from("lhs,rhs,ratio,witness\n");
        for it in &self.items {
            let w = serde_json::to_string(&it.witness).unwrap_or_default().replace('"', "'");
            out.push_str(&format!("{:?},{:?},{:?},\"{}\"\n", it.lhs, it.rhs, it.ratio, w));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_is_max_and_pass_tracks_bound() {
        let items = vec![
            CheckItem::new(Witness::label("a"), 1.0, 2.0),
            CheckItem::new(Witness::label("b"), 3.0, 2.0),
            CheckItem::new(Witness::label("c"), 3.0, 2.0),
        ];
        let r = CheckReport::new("t").bounded(items.clone(), 1.5, 0.0);
        assert_eq!(r.fitted, 1.5);
        assert_eq!(r.witness, Some(Witness::label("b")));
        assert!(r.passed);
        let r = CheckReport::new("t").bounded(items, 1.0, 1e-12);
        assert_eq!(r.violations, 2);
        assert!(!r.passed);
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(ratio(0.0, 0.0), 0.0);
        assert_eq!(ratio(1.0, 0.0), f64::INFINITY);
        assert_eq!(ratio(1.0, 4.0), 0.25);
    }

    #[test]
    fn refinement_drift() {
        let mk = |f: f64| CheckReport::new("t").fitted_only(vec![CheckItem::new(Witness::label("x"), f, 1.0)]);
        let r = CheckReport::with_refinement(vec![("8".into(), mk(1.0)), ("16".into(), mk(1.2))], 0.25);
        assert!(r.passed);
        assert!((r.refinement[1].drift.unwrap() - 0.2).abs() < 1e-12);
        let r = CheckReport::with_refinement(vec![("8".into(), mk(1.0)), ("16".into(), mk(1.3))], 0.25);
        assert!(!r.passed);
    }
}
