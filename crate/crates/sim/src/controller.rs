use std::fmt;
use std::str::FromStr;

use control_tree::acc::HypothesisMode;
use control_tree::slalom::{SlalomMode, DEFAULT_MAX_UNCERTAIN};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::SimError;

/// Planner variant driving an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Controller {
    /// One branch per hypothesis that can matter within the horizon.
    TreeFull,
    /// At most this many branches.
    Tree(usize),
    /// Worst case only.
    Single,
    /// Single branch with every hidden state known.
    Oracle,
}

impl Controller {
    pub fn acc_mode(self) -> HypothesisMode {
        match self {
            Controller::TreeFull | Controller::Oracle => HypothesisMode::Tree { max_branches: None },
            Controller::Tree(n) => HypothesisMode::Tree { max_branches: Some(n) },
            Controller::Single => HypothesisMode::SingleHypothesis,
        }
    }

    /// `tree-N` enumerates the `log2 N` nearest uncertain obstacles.
    pub fn slalom_mode(self) -> SlalomMode {
        match self {
            Controller::TreeFull | Controller::Oracle => SlalomMode::Tree {
                max_uncertain: DEFAULT_MAX_UNCERTAIN,
            },
            Controller::Tree(n) => SlalomMode::Tree {
                max_uncertain: n.max(1).ilog2() as usize,
            },
            Controller::Single => SlalomMode::SingleHypothesis,
        }
    }

    pub fn is_oracle(self) -> bool {
        self == Controller::Oracle
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Controller::TreeFull => f.write_str("tree-full"),
            Controller::Tree(n) => write!(f, "tree-{n}"),
            Controller::Single => f.write_str("single"),
            Controller::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for Controller {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || SimError::UnknownController(s.to_string());
        match s {
            "tree-full" | "tree" => Ok(Controller::TreeFull),
            "single" | "single-hypothesis" | "baseline" => Ok(Controller::Single),
            "oracle" => Ok(Controller::Oracle),
            _ => {
                let n: usize = s.strip_prefix("tree-").ok_or_else(unknown)?.parse().map_err(|_| unknown())?;
                if n < 2 {
                    return Err(unknown());
                }
                Ok(Controller::Tree(n))
            }
        }
    }
}

impl Serialize for Controller {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Controller {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints() {
        for (text, c) in [
            ("tree-full", Controller::TreeFull),
            ("tree-2", Controller::Tree(2)),
            ("tree-16", Controller::Tree(16)),
            ("single", Controller::Single),
            ("oracle", Controller::Oracle),
        ] {
            assert_eq!(text.parse::<Controller>().unwrap(), c);
            assert_eq!(c.to_string(), text);
        }
        assert_eq!("baseline".parse::<Controller>().unwrap(), Controller::Single);
        for bad in ["tree-1", "tree-x", "greedy", ""] {
            assert!(bad.parse::<Controller>().is_err(), "{bad}");
        }
    }

    #[test]
    fn slalom_branch_counts() {
        assert_eq!(Controller::Tree(4).slalom_mode(), SlalomMode::Tree { max_uncertain: 2 });
        assert_eq!(Controller::Tree(2).slalom_mode(), SlalomMode::Tree { max_uncertain: 1 });
        assert_eq!(Controller::Tree(5).slalom_mode(), SlalomMode::Tree { max_uncertain: 2 });
    }
}
