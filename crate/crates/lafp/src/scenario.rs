//! Broadcast-channel instance: transmit antenna count, power budget, and
//! per-user discrete fade distributions, plus JSON ingestion.
//!
//! Receiver noise is the identity covariance by convention (a non-identity
//! noise is absorbed by whitening the channel matrix), so scenario files
//! carry no noise field. Fade supports are finite and discrete; a
//! continuous distribution is represented by the caller as an explicit
//! atom list.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use serde::{Deserialize, Serialize};

/// One realization of a user's channel matrix together with its probability.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FadeAtom {
    pub prob: f64,
    pub h: Mat,
}

/// A user's receive-antenna count and fade distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UserChannel {
    pub n_antennas: usize,
    pub atoms: Vec<FadeAtom>,
}

/// A broadcast-channel instance. Users are listed in encoding order:
/// the first user in the list is encoded first.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub m_antennas: usize,
    pub power: f64,
    pub users: Vec<UserChannel>,
}

impl Scenario {
    /// Validate all invariants. `power == 0` is accepted for programmatic
    /// degenerate cases; the file loader is stricter and rejects it.
    pub fn validate(&self) -> Result<()> {
        if self.m_antennas == 0 {
            return Err(Error::Validation("m_antennas must be positive".into()));
        }
        if !self.power.is_finite() || self.power < 0.0 {
            return Err(Error::Validation(format!("invalid power {}", self.power)));
        }
        if self.users.is_empty() {
            return Err(Error::Validation("scenario needs at least one user".into()));
        }
        for (l, u) in self.users.iter().enumerate() {
            u.validate(self.m_antennas)
                .map_err(|e| Error::Validation(format!("user {}: {e}", l + 1)))?;
        }
        Ok(())
    }
}

impl UserChannel {
    pub fn validate(&self, m_antennas: usize) -> Result<()> {
        if self.n_antennas == 0 {
            return Err(Error::Validation("n_antennas must be positive".into()));
        }
        if self.atoms.is_empty() {
            return Err(Error::Validation(
                "fade distribution needs at least one atom".into(),
            ));
        }
        let mut total = 0.0;
        for (k, a) in self.atoms.iter().enumerate() {
            if !(a.prob > 0.0 && a.prob <= 1.0) {
                return Err(Error::Validation(format!(
                    "atom {k}: probability {} outside (0, 1]",
                    a.prob
                )));
            }
            if a.h.rows() != self.n_antennas || a.h.cols() != m_antennas {
                return Err(Error::Validation(format!(
                    "atom {k}: channel matrix is {}x{}, expected {}x{}",
                    a.h.rows(),
                    a.h.cols(),
                    self.n_antennas,
                    m_antennas
                )));
            }
            if !a.h.is_finite() {
                return Err(Error::Validation(format!("atom {k}: non-finite entries")));
            }
            total += a.prob;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "atom probabilities sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Parse and validate a scenario from JSON text.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if sc.power <= 0.0 {
        return Err(Error::Validation(format!(
            "power must be positive, got {}",
            sc.power
        )));
    }
    sc.validate()?;
    Ok(sc)
}

/// Probability-weighted mean channel matrix `E[H]`.
pub fn mean_fade(u: &UserChannel) -> Mat {
    let mut acc = Mat::zeros(u.atoms[0].h.rows(), u.atoms[0].h.cols());
    for a in &u.atoms {
        acc = acc.add(&a.h.scale(a.prob));
    }
    acc
}

/// Probability-weighted expectation of a per-realization functional.
pub fn expect_over_fade(u: &UserChannel, mut f: impl FnMut(&Mat) -> Result<f64>) -> Result<f64> {
    let mut acc = 0.0;
    for a in &u.atoms {
        acc += a.prob * f(&a.h)?;
    }
    Ok(acc)
}

/// The two-user numeric example used throughout the test suite: M = 2,
/// P = 10, two single-antenna users with two equiprobable fade atoms each.
pub fn example_scenario_json() -> &'static str {
    r#"{
  "m_antennas": 2,
  "power": 10.0,
  "users": [
    {"n_antennas": 1, "atoms": [
      {"prob": 0.5, "h": [[1.0, 0.4]]},
      {"prob": 0.5, "h": [[1.0, 3.0]]}
    ]},
    {"n_antennas": 1, "atoms": [
      {"prob": 0.5, "h": [[0.4, 1.0]]},
      {"prob": 0.5, "h": [[3.0, 1.0]]}
    ]}
  ]
}"#
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn loads_example_scenario() {
        let sc = load_scenario(example_scenario_json()).unwrap();
        assert_eq!(sc.users.len(), 2);
        assert_eq!(sc.m_antennas, 2);
        assert_relative_eq!(sc.power, 10.0);
        assert_eq!(sc.users[0].n_antennas, 1);
    }

    #[test]
    fn rejects_bad_probability_mass() {
        let txt = r#"{"m_antennas": 2, "power": 1.0, "users": [
            {"n_antennas": 1, "atoms": [
                {"prob": 0.5, "h": [[1.0, 0.0]]},
                {"prob": 0.6, "h": [[0.0, 1.0]]}
            ]}]}"#;
        assert!(matches!(load_scenario(txt), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let txt = r#"{"m_antennas": 2, "power": 1.0, "users": [
            {"n_antennas": 1, "atoms": [
                {"prob": 1.0, "h": [[1.0, 0.0, 2.0]]}
            ]}]}"#;
        assert!(matches!(load_scenario(txt), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_nonpositive_power() {
        let txt = r#"{"m_antennas": 1, "power": 0.0, "users": [
            {"n_antennas": 1, "atoms": [{"prob": 1.0, "h": [[1.0]]}]}]}"#;
        assert!(matches!(load_scenario(txt), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_malformed_json() {
        assert!(matches!(load_scenario("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn mean_fade_of_example_user_1() {
        let sc = load_scenario(example_scenario_json()).unwrap();
        let m = mean_fade(&sc.users[0]);
        assert_relative_eq!(m.get(0, 0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(m.get(0, 1), 1.7, epsilon = 1e-14);
    }

    #[test]
    fn mean_fade_single_atom_and_symmetric_pair() {
        let h = Mat::from_rows(&[vec![2.0, -1.0]]).unwrap();
        let u = UserChannel {
            n_antennas: 1,
            atoms: vec![FadeAtom {
                prob: 1.0,
                h: h.clone(),
            }],
        };
        assert!(mean_fade(&u).max_abs_diff(&h) < 1e-15);
        let u2 = UserChannel {
            n_antennas: 1,
            atoms: vec![
                FadeAtom {
                    prob: 0.5,
                    h: h.clone(),
                },
                FadeAtom {
                    prob: 0.5,
                    h: h.scale(-1.0),
                },
            ],
        };
        assert!(mean_fade(&u2).max_abs() < 1e-15);
    }

    #[test]
    fn expectation_normalizes_and_projects() {
        let sc = load_scenario(example_scenario_json()).unwrap();
        let one = expect_over_fade(&sc.users[0], |_| Ok(1.0)).unwrap();
        assert_relative_eq!(one, 1.0, epsilon = 1e-14);
        let first = expect_over_fade(&sc.users[0], |h| Ok(h.get(0, 0))).unwrap();
        assert_relative_eq!(first, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn expectation_matches_two_term_sum() {
        let u = UserChannel {
            n_antennas: 1,
            atoms: vec![
                FadeAtom {
                    prob: 0.25,
                    h: Mat::from_rows(&[vec![1.0, 2.0]]).unwrap(),
                },
                FadeAtom {
                    prob: 0.75,
                    h: Mat::from_rows(&[vec![0.5, -1.0]]).unwrap(),
                },
            ],
        };
        // f = ln det(1 + h h^T) for a row vector h
        let f = |h: &Mat| -> Result<f64> {
            let q = h.matmul(&h.transpose()).get(0, 0);
            Ok((1.0 + q).ln())
        };
        let got = expect_over_fade(&u, f).unwrap();
        let expect = 0.25 * (1.0f64 + 5.0).ln() + 0.75 * (1.0f64 + 1.25).ln();
        assert_relative_eq!(got, expect, epsilon = 1e-14);
    }

    #[test]
    fn round_trip_preserves_fields() {
        let sc = load_scenario(example_scenario_json()).unwrap();
        let text = serde_json::to_string(&sc).unwrap();
        let sc2 = load_scenario(&text).unwrap();
        assert_eq!(sc.m_antennas, sc2.m_antennas);
        assert_eq!(sc.power, sc2.power);
        assert_eq!(sc.users.len(), sc2.users.len());
        for (a, b) in sc.users.iter().zip(&sc2.users) {
            assert_eq!(a.n_antennas, b.n_antennas);
            for (x, y) in a.atoms.iter().zip(&b.atoms) {
                assert_eq!(x.prob, y.prob);
                assert_eq!(x.h, y.h);
            }
        }
    }
}
