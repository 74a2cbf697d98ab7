//! High-level action vocabulary shared by the simulator, grounding and the
//! planning loop.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Kind of extinguishing supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Supply {
    Water,
    Sand,
}

impl Supply {
    pub const ALL: [Supply; 2] = [Supply::Water, Supply::Sand];

    pub fn as_str(self) -> &'static str {
        match self {
            Supply::Water => "water",
            Supply::Sand => "sand",
        }
    }
}

impl fmt::Display for Supply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Supply {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "water" => Ok(Supply::Water),
            "sand" => Ok(Supply::Sand),
            other => Err(ActionParseError(format!("unknown supply type `{other}`"))),
        }
    }
}

/// Grid direction used by `Move` and by local observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    Center,
}

impl Direction {
    /// Order in which local observations are reported.
    pub const LOCAL_ORDER: [Direction; 5] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
        Direction::Center,
    ];

    pub const CARDINAL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    /// Row/column offset of a unit step.
    pub fn offset(self) -> (i32, i32) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
            Direction::Center => (0, 0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "Up",
            Direction::Down => "Down",
            Direction::Left => "Left",
            Direction::Right => "Right",
            Direction::Center => "Center",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            "center" => Ok(Direction::Center),
            other => Err(ActionParseError(format!("unknown direction `{other}`"))),
        }
    }
}

/// One executable skill for one agent for one high-level step.
///
/// The canonical text form (`Display` / `FromStr`) is the call syntax used in
/// traces and the grounding corpus, e.g. `UseSupply(Fire_1, water)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum HighLevelAction {
    Move { direction: Direction },
    NavigateTo { target: String },
    Carry { person: String },
    DropOff { person: String, deposit: String },
    StoreSupply { deposit: String },
    UseSupply { fire: String, supply: Supply },
    GetSupplyFromDeposit { deposit: String, supply: Supply },
    GetSupplyFromReservoir { reservoir: String },
    Explore,
    StayIdle,
    Done,
}

/// Template family of an action, independent of its slot fillers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Move,
    NavigateTo,
    Carry,
    DropOff,
    StoreSupply,
    UseSupply,
    GetSupply,
    Explore,
    StayIdle,
    Done,
}

impl HighLevelAction {
    pub fn kind(&self) -> ActionKind {
        match self {
            HighLevelAction::Move { .. } => ActionKind::Move,
            HighLevelAction::NavigateTo { .. } => ActionKind::NavigateTo,
            HighLevelAction::Carry { .. } => ActionKind::Carry,
            HighLevelAction::DropOff { .. } => ActionKind::DropOff,
            HighLevelAction::StoreSupply { .. } => ActionKind::StoreSupply,
            HighLevelAction::UseSupply { .. } => ActionKind::UseSupply,
            HighLevelAction::GetSupplyFromDeposit { .. }
            | HighLevelAction::GetSupplyFromReservoir { .. } => ActionKind::GetSupply,
            HighLevelAction::Explore => ActionKind::Explore,
            HighLevelAction::StayIdle => ActionKind::StayIdle,
            HighLevelAction::Done => ActionKind::Done,
        }
    }

    /// Object ids referenced by the action, in slot order.
    pub fn object_ids(&self) -> Vec<&str> {
        match self {
            HighLevelAction::NavigateTo { target } => vec![target],
            HighLevelAction::Carry { person } => vec![person],
            HighLevelAction::DropOff { person, deposit } => vec![person, deposit],
            HighLevelAction::StoreSupply { deposit } => vec![deposit],
            HighLevelAction::UseSupply { fire, .. } => vec![fire],
            HighLevelAction::GetSupplyFromDeposit { deposit, .. } => vec![deposit],
            HighLevelAction::GetSupplyFromReservoir { reservoir } => vec![reservoir],
            HighLevelAction::Move { .. }
            | HighLevelAction::Explore
            | HighLevelAction::StayIdle
            | HighLevelAction::Done => Vec::new(),
        }
    }

    /// Phrase used when listing the action vocabulary to a language model.
    pub fn describe(&self) -> String {
        match self {
            HighLevelAction::Move { direction } => format!("move {}", direction.as_str().to_lowercase()),
            HighLevelAction::NavigateTo { target } => format!("navigate to {target}"),
            HighLevelAction::Carry { person } => format!("carry {person}"),
            HighLevelAction::DropOff { person, deposit } => format!("drop off {person} at {deposit}"),
            HighLevelAction::StoreSupply { deposit } => format!("store supply in {deposit}"),
            HighLevelAction::UseSupply { fire, supply } => format!("use {supply} on {fire}"),
            HighLevelAction::GetSupplyFromDeposit { deposit, supply } => {
                format!("get {supply} from {deposit}")
            }
            HighLevelAction::GetSupplyFromReservoir { reservoir } => {
                format!("get supply from {reservoir}")
            }
            HighLevelAction::Explore => "explore".to_string(),
            HighLevelAction::StayIdle => "stay idle".to_string(),
            HighLevelAction::Done => "Done".to_string(),
        }
    }
}

impl fmt::Display for HighLevelAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HighLevelAction::Move { direction } => write!(f, "Move({direction})"),
            HighLevelAction::NavigateTo { target } => write!(f, "NavigateTo({target})"),
            HighLevelAction::Carry { person } => write!(f, "Carry({person})"),
            HighLevelAction::DropOff { person, deposit } => write!(f, "DropOff({person}, {deposit})"),
            HighLevelAction::StoreSupply { deposit } => write!(f, "StoreSupply({deposit})"),
            HighLevelAction::UseSupply { fire, supply } => write!(f, "UseSupply({fire}, {supply})"),
            HighLevelAction::GetSupplyFromDeposit { deposit, supply } => {
                write!(f, "GetSupply({deposit}, {supply})")
            }
            HighLevelAction::GetSupplyFromReservoir { reservoir } => write!(f, "GetSupply({reservoir})"),
            HighLevelAction::Explore => f.write_str("Explore()"),
            HighLevelAction::StayIdle => f.write_str("StayIdle()"),
            HighLevelAction::Done => f.write_str("Done()"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid action syntax: {0}")]
pub struct ActionParseError(pub String);

impl FromStr for HighLevelAction {
    type Err = ActionParseError;

    /// Parses the canonical call syntax. `GetSupply` with one argument refers
    /// to a reservoir, with two to a deposit.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) => {
                let close = s
                    .rfind(')')
                    .filter(|&c| c > open && c == s.len() - 1)
                    .ok_or_else(|| ActionParseError(format!("unbalanced parentheses in `{s}`")))?;
                let inner = &s[open + 1..close];
                let args: Vec<&str> = if inner.trim().is_empty() {
                    Vec::new()
                } else {
                    inner.split(',').map(str::trim).collect()
                };
                (s[..open].trim(), args)
            }
            None => (s, Vec::new()),
        };
        let arity = |n: usize| -> Result<(), ActionParseError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(ActionParseError(format!("`{name}` takes {n} argument(s), got {}", args.len())))
            }
        };
        let owned = |i: usize| args[i].to_string();
        match name {
            "Move" => {
                arity(1)?;
                Ok(HighLevelAction::Move { direction: args[0].parse()? })
            }
            "NavigateTo" => {
                arity(1)?;
                Ok(HighLevelAction::NavigateTo { target: owned(0) })
            }
            "Carry" => {
                arity(1)?;
                Ok(HighLevelAction::Carry { person: owned(0) })
            }
            "DropOff" => {
                arity(2)?;
                Ok(HighLevelAction::DropOff { person: owned(0), deposit: owned(1) })
            }
            "StoreSupply" => {
                arity(1)?;
                Ok(HighLevelAction::StoreSupply { deposit: owned(0) })
            }
            "UseSupply" => {
                arity(2)?;
                Ok(HighLevelAction::UseSupply { fire: owned(0), supply: args[1].parse()? })
            }
            "GetSupply" => match args.len() {
                1 => Ok(HighLevelAction::GetSupplyFromReservoir { reservoir: owned(0) }),
                2 => Ok(HighLevelAction::GetSupplyFromDeposit { deposit: owned(0), supply: args[1].parse()? }),
                n => Err(ActionParseError(format!("`GetSupply` takes 1 or 2 arguments, got {n}"))),
            },
            "Explore" => arity(0).map(|_| HighLevelAction::Explore),
            "StayIdle" => arity(0).map(|_| HighLevelAction::StayIdle),
            "Done" => arity(0).map(|_| HighLevelAction::Done),
            other => Err(ActionParseError(format!("unknown action `{other}`"))),
        }
    }
}
