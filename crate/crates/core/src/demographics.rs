//! Demographic labels and the category schemes used as prediction targets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];

    /// Category index: male = 0, female = 1.
    pub fn index(self) -> usize {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Gender> {
        match index {
            0 => Some(Gender::Male),
            1 => Some(Gender::Female),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Gender::Male => "M",
            Gender::Female => "F",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "M" | "m" => Ok(Gender::Male),
            "F" | "f" => Ok(Gender::Female),
            other => Err(Error::data(format!("unknown gender token {other:?}"))),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Inclusive bounds on accepted ages, in years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBounds {
    pub min: u32,
    pub max: u32,
}

impl Default for AgeBounds {
    fn default() -> Self {
        AgeBounds { min: 10, max: 100 }
    }
}

impl AgeBounds {
    pub fn contains(&self, age: u32) -> bool {
        (self.min..=self.max).contains(&age)
    }

    pub fn span(&self) -> usize {
        (self.max - self.min + 1) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicLabel {
    pub gender: Gender,
    pub age: u32,
}

/// Ordered age bins `[10,25) [25,35) [35,50) [50,inf)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeGroups {
    /// Lower edges of bins 1..C; bin 0 takes everything below the first edge.
    edges: Vec<u32>,
}

impl Default for AgeGroups {
    fn default() -> Self {
        AgeGroups {
            edges: vec![25, 35, 50],
        }
    }
}

impl AgeGroups {
    pub fn new(edges: Vec<u32>) -> Result<Self> {
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("age group edges must be strictly increasing"));
        }
        Ok(AgeGroups { edges })
    }

    pub fn count(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn group_of(&self, age: u32) -> usize {
        self.edges.partition_point(|&edge| edge <= age)
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.count());
        let mut lower: Option<u32> = None;
        for &edge in &self.edges {
            out.push(match lower {
                None => format!("<{edge}"),
                Some(lo) => format!("{lo}-{}", edge - 1),
            });
            lower = Some(edge);
        }
        out.push(format!("{}+", lower.unwrap_or(0)));
        out
    }
}

/// The prediction target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Gender,
    Age,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Gender => "gender",
            Task::Age => "age",
        }
    }

    pub fn categories(self, groups: &AgeGroups) -> usize {
        match self {
            Task::Gender => 2,
            Task::Age => groups.count(),
        }
    }

    pub fn category_of(self, label: &DemographicLabel, groups: &AgeGroups) -> usize {
        match self {
            Task::Gender => label.gender.index(),
            Task::Age => groups.group_of(label.age),
        }
    }

    pub fn category_names(self, groups: &AgeGroups) -> Vec<String> {
        match self {
            Task::Gender => vec!["M".into(), "F".into()],
            Task::Age => groups.labels(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
