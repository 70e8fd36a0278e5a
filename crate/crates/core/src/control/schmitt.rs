use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchDecision {
    Advance,
    Maintain,
    Reinforce,
}

impl SwitchDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            SwitchDecision::Advance => "advance",
            SwitchDecision::Maintain => "maintain",
            SwitchDecision::Reinforce => "reinforce",
        }
    }
}

/// Two-threshold switch. The band `[r_low, r_high]` is closed.
pub fn schmitt_decide(r_t: f64, r_high: f64, r_low: f64) -> SwitchDecision {
    debug_assert!(r_high > r_low, "thresholds out of order");
    if r_t > r_high {
        SwitchDecision::Advance
    } else if r_t < r_low {
        SwitchDecision::Reinforce
    } else {
        SwitchDecision::Maintain
    }
}
