//! Interval validation by feasibility sampling.
//!
//! Consecutive endpoint candidates bound interval candidates. Each interval
//! is valid iff the system is solvable at an interior sample; each endpoint
//! is closed iff the system is solvable there and it is not an open
//! candidate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::endpoints::{Closedness, EndpointCandidate};
use crate::faure::{scale_to_box, Faure};
use crate::lsq::{self, LmConfig, TapeResiduals};
use crate::expr::Tape;
use crate::separation::SeparatedFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub solvable: bool,
    pub best_residual: f64,
    /// Reduced coordinates; present when solvable.
    pub witness: Option<Vec<f64>>,
}

/// Solvability of `G` with the target held at `p`.
pub fn check_feasible(
    sf: &SeparatedFunction,
    p: f64,
    cfg: &Config,
    hint: Option<&[f64]>,
) -> FeasibilityVerdict {
    let mut eqs = sf.g.clone();
    eqs.push(sf.target_residual(p));
    if eqs.iter().any(|e| e.as_const().is_some_and(|c| c.abs() > 0.0)) {
        let worst = eqs
            .iter()
            .filter_map(|e| e.as_const())
            .map(|c| c * c)
            .sum::<f64>();
        return FeasibilityVerdict {
            solvable: false,
            best_residual: worst,
            witness: None,
        };
    }
    let m = sf.m();
    let efeas = cfg.feasibility.efeas;
    let tape = Tape::compile(&eqs, m);
    let mut problem = TapeResiduals::new(&tape);
    let faure = Faure::new(m.max(1));
    let starts = hint
        .filter(|h| h.len() == m)
        .map(|h| h.to_vec())
        .into_iter()
        .chain((1..=cfg.feasibility.starts as u64).map(|i| scale_to_box(&faure.point(i), &sf.bounds)));
    let lm = LmConfig {
        max_iterations: cfg.feasibility.max_iterations,
        target_cost: efeas * 1e-4,
        ..LmConfig::default()
    };
    match lsq::multistart(&mut problem, starts, &lm, efeas) {
        Some(best) if best.cost < efeas => FeasibilityVerdict {
            solvable: true,
            best_residual: best.cost,
            witness: Some(best.x),
        },
        Some(best) => FeasibilityVerdict {
            solvable: false,
            best_residual: best.cost,
            witness: None,
        },
        None => FeasibilityVerdict {
            solvable: false,
            best_residual: f64::INFINITY,
            witness: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    /// `+inf` serializes as `null`.
    #[serde(with = "finite_or_null")]
    pub hi: f64,
    pub hi_closed: bool,
}

/// Non-finite values serialize as `null`, which reads back as `+inf`.
pub(crate) mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_closed { v >= self.lo } else { v > self.lo };
        let below = if self.hi_closed { v <= self.hi } else { v < self.hi };
        above && below
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_closed { '[' } else { '(' };
        let close = if self.hi_closed { ']' } else { ')' };
        if self.hi.is_finite() {
            write!(f, "{open}{}, {}{close}", fmt_value(self.lo), fmt_value(self.hi))
        } else {
            write!(f, "{open}{}, +inf{close}", fmt_value(self.lo))
        }
    }
}

fn fmt_value(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Sample {
    pub value: f64,
    pub role: SampleRole,
    pub solvable: bool,
    #[serde(with = "finite_or_null")]
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleRole {
    Endpoint,
    Midpoint,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Provenance {
    pub candidates: Vec<EndpointCandidate>,
    pub samples: Vec<Sample>,
    pub continuum: bool,
    pub gauge_dropped: bool,
    pub roots: usize,
    pub evaluations: usize,
    pub sample_rule: String,
}

/// Disjoint sorted intervals of allowable values, as a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParameterRange {
    pub parameter: String,
    pub intervals: Vec<Interval>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub provenance: Provenance,
}

impl ParameterRange {
    pub fn contains(&self, v: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(v))
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

impl fmt::Display for ParameterRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return write!(f, "empty");
        }
        let parts: Vec<String> = self.intervals.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join(" U "))
    }
}

/// Validates the interval candidates formed by consecutive `candidates`.
pub fn validate(
    candidates: &[EndpointCandidate],
    sf: &SeparatedFunction,
    cfg: &Config,
    seed: u64,
) -> ParameterRange {
    let mut samples = Vec::new();
    let mut hint: Option<Vec<f64>> = None;
    let mut test = |v: f64, role: SampleRole, hint: &mut Option<Vec<f64>>| {
        let verdict = check_feasible(sf, v, cfg, hint.as_deref());
        samples.push(Sample {
            value: v,
            role,
            solvable: verdict.solvable,
            residual: verdict.best_residual,
        });
        if let Some(w) = verdict.witness {
            *hint = Some(w);
        }
        verdict.solvable
    };

    let upper = sf.kind.upper_bound();
    let endpoint_ok: Vec<bool> = candidates
        .iter()
        .map(|c| c.value.is_finite() && test(c.value, SampleRole::Endpoint, &mut hint))
        .collect();
    let closed_at = |k: usize| {
        let c = &candidates[k];
        // the angle upper bound is the lower bound again, mod pi
        let wraps = sf.kind.is_angle() && c.value >= upper;
        endpoint_ok[k] && c.closedness == Closedness::Closed && !wraps
    };

    let span = cfg.validation.probe_factor * sf.scale;
    let mut valid = vec![false; candidates.len().saturating_sub(1)];
    for k in 0..valid.len() {
        let (lo, hi) = (candidates[k].value, candidates[k + 1].value);
        valid[k] = if hi.is_finite() {
            test(0.5 * (lo + hi), SampleRole::Midpoint, &mut hint)
        } else {
            let mut probes = vec![lo + span];
            if cfg.validation.paranoid {
                probes.extend([2.0, 4.0, 8.0].map(|f| lo + f * sf.scale));
            }
            probes
                .into_iter()
                .all(|p| test(p, SampleRole::Probe, &mut hint))
        };
    }

    let mut intervals: Vec<Interval> = Vec::new();
    for k in 0..valid.len() {
        if !valid[k] {
            continue;
        }
        let lo = candidates[k].value;
        let hi = candidates[k + 1].value;
        let next = Interval {
            lo,
            lo_closed: closed_at(k),
            hi,
            hi_closed: hi.is_finite() && closed_at(k + 1),
        };
        match intervals.last_mut() {
            // shared endpoint that is attainable joins the two
            Some(last) if last.hi == lo && endpoint_ok[k] => {
                last.hi = next.hi;
                last.hi_closed = next.hi_closed;
            }
            _ => intervals.push(next),
        }
    }
    // attainable candidates outside every valid interval are isolated values
    for (k, c) in candidates.iter().enumerate() {
        let touched = (k > 0 && valid[k - 1]) || (k < valid.len() && valid[k]);
        if !touched && closed_at(k) {
            intervals.push(Interval {
                lo: c.value,
                lo_closed: true,
                hi: c.value,
                hi_closed: true,
            });
        }
    }
    intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));

    ParameterRange {
        parameter: sf.target.clone(),
        intervals,
        seed,
        provenance: Provenance {
            candidates: candidates.to_vec(),
            samples,
            sample_rule: format!(
                "interval midpoint; unbounded intervals at lo + {} x scale {}",
                cfg.validation.probe_factor, sf.scale
            ),
            gauge_dropped: sf.gauge_dropped,
            ..Provenance::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_display_and_membership() {
        let i = Interval {
            lo: 0.0,
            lo_closed: true,
            hi: f64::INFINITY,
            hi_closed: false,
        };
        assert_eq!(i.to_string(), "[0, +inf)");
        assert!(i.contains(0.0) && i.contains(1e9));
        let j = Interval {
            lo: 10.0,
            lo_closed: false,
            hi: 30.0,
            hi_closed: true,
        };
        assert_eq!(j.to_string(), "(10, 30]");
        assert!(!j.contains(10.0) && j.contains(30.0) && !j.contains(30.5));
    }

    #[test]
    fn report_json_uses_null_for_infinity() {
        let r = ParameterRange {
            parameter: "d2".into(),
            intervals: vec![Interval {
                lo: 0.0,
                lo_closed: true,
                hi: f64::INFINITY,
                hi_closed: false,
            }],
            seed: 42,
            provenance: Provenance::default(),
        };
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains(r#""intervals":[{"lo":0.0,"loClosed":true,"hi":null,"hiClosed":false}]"#));
        let back: ParameterRange = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
