//! Domain types shared by every solver: the game constants, equilibrium
//! reports and strategy descriptors.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    /// One entry per violated bound, named after the bound.
    #[error("invalid game parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
    #[error("strategy constant outside its admissible set: {0}")]
    Inadmissible(String),
    #[error("non-finite payoff in {kind} report")]
    NonFinitePayoff { kind: EquilibriumKind },
    #[error("CL report is missing solver metadata `{0}`")]
    MissingGridMetadata(&'static str),
}

/// Constants of the leader-follower game.
///
/// The state follows `dX = (a + b) dt + sigma dW` with leader action
/// `a in [-a_max, a_max]` and follower action `b in [0, b_max]`; both players
/// are paid `X_T` minus a quadratic effort cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub sigma: f64,
    #[serde(rename = "c_F")]
    pub cost_follower: f64,
    #[serde(rename = "c_L")]
    pub cost_leader: f64,
    pub a_max: f64,
    pub b_max: f64,
    pub x0: f64,
}

impl GameParams {
    /// The reference scenario: `T = 1, sigma = 1, c_F = c_L = 1, a_max = 10, b_max = 3, x0 = 0`.
    pub fn benchmark() -> Self {
        Self {
            horizon: 1.0,
            sigma: 1.0,
            cost_follower: 1.0,
            cost_leader: 1.0,
            a_max: 10.0,
            b_max: 3.0,
            x0: 0.0,
        }
    }

    /// Checks the standing assumptions and returns the unchanged constants
    /// wrapped in [`ValidParams`].
    pub fn validate(self) -> Result<ValidParams, ModelError> {
        let mut violations = Vec::new();
        let named = [
            ("T", self.horizon),
            ("sigma", self.sigma),
            ("c_F", self.cost_follower),
            ("c_L", self.cost_leader),
            ("a_max", self.a_max),
            ("b_max", self.b_max),
            ("x0", self.x0),
        ];
        for (name, value) in named {
            if !value.is_finite() {
                violations.push(format!("{name} is not finite"));
            }
        }
        if !violations.is_empty() {
            return Err(ModelError::InvalidParams(violations));
        }
        if self.horizon <= 0.0 {
            violations.push("T ≤ 0".to_string());
        }
        if self.sigma == 0.0 {
            violations.push("sigma = 0".to_string());
        }
        if self.cost_follower <= 0.0 {
            violations.push("c_F ≤ 0".to_string());
        }
        if self.cost_leader <= 0.0 {
            violations.push("c_L ≤ 0".to_string());
        }
        if self.cost_leader > 0.0 && self.a_max <= 1.0 / self.cost_leader {
            violations.push("a_max ≤ 1/c_L".to_string());
        }
        if self.cost_follower > 0.0 && self.b_max <= 1.0 / self.cost_follower {
            violations.push("b_max ≤ 1/c_F".to_string());
        }
        if violations.is_empty() {
            Ok(ValidParams(self))
        } else {
            Err(ModelError::InvalidParams(violations))
        }
    }
}

/// Game constants that passed [`GameParams::validate`]. Every solver takes
/// this type, so no equilibrium can be computed from unchecked input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidParams(GameParams);

impl Deref for ValidParams {
    type Target = GameParams;

    fn deref(&self) -> &GameParams {
        &self.0
    }
}

impl<'de> Deserialize<'de> for ValidParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        GameParams::deserialize(d)?
            .validate()
            .map_err(serde::de::Error::custom)
    }
}

impl ValidParams {
    pub fn params(&self) -> GameParams {
        self.0
    }

    /// Same constants with a different initial state.
    pub fn with_x0(&self, x0: f64) -> ValidParams {
        ValidParams(GameParams { x0, ..self.0 })
    }

    /// Upper end of the follower's sensitivity saturation interval `[0, b_max c_F]`.
    pub fn z_sat_hi(&self) -> f64 {
        self.b_max * self.cost_follower
    }

    /// Leader action set `[-a_max, a_max]`.
    pub fn action_set_leader(&self) -> (f64, f64) {
        (-self.a_max, self.a_max)
    }

    /// Follower action set `[0, b_max]`.
    pub fn action_set_follower(&self) -> (f64, f64) {
        (0.0, self.b_max)
    }

    /// Follower best response to a sensitivity `z`: `Π_[0, b_max c_F](z) / c_F`.
    pub fn follower_response(&self, z: f64) -> f64 {
        z.clamp(0.0, self.z_sat_hi()) / self.cost_follower
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EquilibriumKind {
    #[serde(rename = "FB")]
    FirstBest,
    #[serde(rename = "AOL")]
    Aol,
    #[serde(rename = "AF")]
    Af,
    #[serde(rename = "ACLM")]
    Aclm,
    #[serde(rename = "ACL")]
    Acl,
    #[serde(rename = "CL")]
    Cl,
}

impl EquilibriumKind {
    pub const ALL: [EquilibriumKind; 6] = [
        EquilibriumKind::FirstBest,
        EquilibriumKind::Aol,
        EquilibriumKind::Af,
        EquilibriumKind::Aclm,
        EquilibriumKind::Acl,
        EquilibriumKind::Cl,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EquilibriumKind::FirstBest => "FB",
            EquilibriumKind::Aol => "AOL",
            EquilibriumKind::Af => "AF",
            EquilibriumKind::Aclm => "ACLM",
            EquilibriumKind::Acl => "ACL",
            EquilibriumKind::Cl => "CL",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(label))
    }
}

impl fmt::Display for EquilibriumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LeaderControl {
    Constant {
        a: f64,
    },
    /// `a(t, x) = Π_A(base + gain (x - X*_t))` where the reference path
    /// `X*` has deterministic drift `base + b*(t)` and shares the state's noise.
    AffineInState {
        base: f64,
        gain: f64,
    },
    /// Play `a_hat`, drop to `a_hat - penalty` whenever the inferred follower
    /// effort differs from `b_hat`.
    Punishment {
        a_hat: f64,
        penalty: f64,
        b_hat: f64,
    },
    /// Interior controls read from a solved value surface.
    FeedbackTable {
        name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FollowerControl {
    Constant {
        b: f64,
    },
    /// `b(t) = Π_B(amplitude · exp(rate (T - t)))`.
    TimeCurve {
        amplitude: f64,
        rate: f64,
    },
    /// `b = Π_[0, z_hi](z) / c_F` for the leader-announced sensitivity `z`.
    ProjectedSensitivity {
        z_hi: f64,
        cost_follower: f64,
    },
}

impl FollowerControl {
    /// Effort at time `t` for the deterministic variants; `None` for feedback.
    pub fn effort_at(&self, t: f64, params: &ValidParams) -> Option<f64> {
        match *self {
            FollowerControl::Constant { b } => Some(b),
            FollowerControl::TimeCurve { amplitude, rate } => {
                Some((amplitude * (rate * (params.horizon - t)).exp()).clamp(0.0, params.b_max))
            }
            FollowerControl::ProjectedSensitivity { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyDescriptor {
    pub leader: LeaderControl,
    pub follower: FollowerControl,
}

impl StrategyDescriptor {
    pub fn constant(a: f64, b: f64) -> Self {
        Self {
            leader: LeaderControl::Constant { a },
            follower: FollowerControl::Constant { b },
        }
    }

    /// Checks that every referenced constant lies in `A = [-a_max, a_max]`
    /// or `B = [0, b_max]`.
    pub fn check(&self, params: &ValidParams) -> Result<(), ModelError> {
        let in_a = |a: f64| a.is_finite() && a.abs() <= params.a_max;
        let in_b = |b: f64| b.is_finite() && (0.0..=params.b_max).contains(&b);
        match self.leader {
            LeaderControl::Constant { a } if !in_a(a) => {
                return Err(ModelError::Inadmissible(format!("leader action {a}")));
            }
            LeaderControl::AffineInState { base, gain } if !in_a(base) || gain < 0.0 => {
                return Err(ModelError::Inadmissible(format!(
                    "affine leader rule base={base} gain={gain}"
                )));
            }
            LeaderControl::Punishment {
                a_hat,
                penalty,
                b_hat,
            } if !in_a(a_hat) || !in_a(a_hat - penalty) || !in_b(b_hat) || penalty < 0.0 => {
                return Err(ModelError::Inadmissible(format!(
                    "punishment rule a_hat={a_hat} p={penalty} b_hat={b_hat}"
                )));
            }
            _ => {}
        }
        match self.follower {
            FollowerControl::Constant { b } if !in_b(b) => {
                Err(ModelError::Inadmissible(format!("follower action {b}")))
            }
            FollowerControl::TimeCurve { amplitude, .. } if !(amplitude >= 0.0) => Err(
                ModelError::Inadmissible(format!("follower curve amplitude {amplitude}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Leader and follower payoffs for one information structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub kind: EquilibriumKind,
    pub x0: f64,
    pub leader_value: f64,
    pub follower_value: f64,
    pub strategy: StrategyDescriptor,
    /// Solver-specific numbers (grid sizes, errors, thresholds).
    pub diagnostics: BTreeMap<String, f64>,
}

impl EquilibriumReport {
    pub fn new(
        kind: EquilibriumKind,
        params: &ValidParams,
        leader_value: f64,
        follower_value: f64,
        strategy: StrategyDescriptor,
        diagnostics: BTreeMap<String, f64>,
    ) -> Result<Self, ModelError> {
        if !leader_value.is_finite() || !follower_value.is_finite() {
            return Err(ModelError::NonFinitePayoff { kind });
        }
        if kind == EquilibriumKind::Cl {
            for key in ["grid_n_time", "grid_n_space"] {
                if !diagnostics.contains_key(key) {
                    return Err(ModelError::MissingGridMetadata(key));
                }
            }
        }
        strategy.check(params)?;
        Ok(Self {
            kind,
            x0: params.x0,
            leader_value,
            follower_value,
            strategy,
            diagnostics,
        })
    }
}

/// Leader action `a` and announced sensitivity `z` at a point of the band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control {
    pub a: f64,
    pub z: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("query (t={t}, x={x}, y={y}) lies outside the reachable band [{lo}, {hi}]")]
pub struct OutsideBand {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Closed-loop feedback map `(t, x, y) -> (a, z)`, defined on the band
/// `w-(t, x) <= y <= w+(t, x)`.
pub trait FeedbackPolicy: Send + Sync {
    fn control_at(&self, t: f64, x: f64, y: f64) -> Result<Control, OutsideBand>;

    /// Bounds `(w-(t, x), w+(t, x))` of the valid `y` range.
    fn band(&self, t: f64, x: f64) -> (f64, f64);

    fn contains(&self, t: f64, x: f64, y: f64) -> bool {
        let (lo, hi) = self.band(t, x);
        lo <= y && y <= hi
    }

    /// Width of the boundary override band in `y - x`; used by the simulator
    /// to size its clamp buffer.
    fn cell_width(&self) -> f64;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_is_valid() {
        let p = GameParams::benchmark();
        assert_eq!(p.validate().unwrap().params(), p);
    }

    #[test]
    fn small_a_max_is_named() {
        let p = GameParams {
            a_max: 0.5,
            ..GameParams::benchmark()
        };
        match p.validate() {
            Err(ModelError::InvalidParams(v)) => assert_eq!(v, vec!["a_max ≤ 1/c_L".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_sigma_is_named() {
        let p = GameParams {
            sigma: 0.0,
            ..GameParams::benchmark()
        };
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("sigma = 0"));
    }

    #[test]
    fn several_violations_are_all_reported() {
        let p = GameParams {
            horizon: -1.0,
            b_max: 0.2,
            ..GameParams::benchmark()
        };
        match p.validate() {
            Err(ModelError::InvalidParams(v)) => {
                assert!(v.contains(&"T ≤ 0".to_string()));
                assert!(v.contains(&"b_max ≤ 1/c_F".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_keys_are_flat_and_exact() {
        let json = serde_json::to_value(GameParams::benchmark()).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["T", "a_max", "b_max", "c_F", "c_L", "sigma", "x0"]);
        let back: GameParams = serde_json::from_value(json).unwrap();
        assert_eq!(back, GameParams::benchmark());
    }

    #[test]
    fn deserializing_valid_params_rejects_bad_input() {
        let bad = r#"{"T":1,"sigma":0,"c_F":1,"c_L":1,"a_max":10,"b_max":3,"x0":0}"#;
        assert!(serde_json::from_str::<ValidParams>(bad).is_err());
    }

    #[test]
    fn cl_report_requires_grid_metadata() {
        let p = GameParams::benchmark().validate().unwrap();
        let s = StrategyDescriptor::constant(1.0, 1.0);
        let err = EquilibriumReport::new(EquilibriumKind::Cl, &p, 2.5, 1.0, s, BTreeMap::new());
        assert_eq!(err.unwrap_err(), ModelError::MissingGridMetadata("grid_n_time"));
    }

    #[test]
    fn inadmissible_constants_are_rejected() {
        let p = GameParams::benchmark().validate().unwrap();
        assert!(StrategyDescriptor::constant(11.0, 1.0).check(&p).is_err());
        assert!(StrategyDescriptor::constant(1.0, 3.5).check(&p).is_err());
        assert!(StrategyDescriptor::constant(-10.0, 0.0).check(&p).is_ok());
    }

    #[test]
    fn kind_labels_round_trip() {
        for k in EquilibriumKind::ALL {
            assert_eq!(EquilibriumKind::from_label(k.label()), Some(k));
        }
        assert_eq!(EquilibriumKind::from_label("fb"), Some(EquilibriumKind::FirstBest));
    }
}
