use std::collections::HashMap;
use std::io::BufRead;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::demographics::{AgeBounds, DemographicLabel};
use crate::error::{Error, Result};

/// Interns opaque user ids into dense indices `0..len`.
#[derive(Debug, Clone, Default)]
pub struct UserIndex {
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl UserIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, id: &str) -> u32 {
        if let Some(&idx) = self.lookup.get(id) {
            return idx;
        }
        let idx = u32::try_from(self.ids.len()).expect("more than u32::MAX users");
        self.ids.push(id.to_string());
        self.lookup.insert(id.to_string(), idx);
        idx
    }

    pub fn get(&self, id: &str) -> Option<u32> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: u32) -> &str {
        &self.ids[index as usize]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Membership of every interned user in the operator-client set and the
/// labeled set. Every interned user belongs to the set of seen users.
#[derive(Debug, Clone, Default)]
pub struct UserSets {
    clients: Vec<bool>,
    labels: Vec<Option<DemographicLabel>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthStats {
    pub accepted: u64,
    pub unknown_gender: u64,
    pub bad_age: u64,
    pub malformed: u64,
    pub subset_violations: u64,
    pub duplicates: u64,
}

impl GroundTruthStats {
    pub fn rejected(&self) -> u64 {
        self.unknown_gender + self.bad_age + self.malformed + self.subset_violations
    }
}

impl UserSets {
    pub fn new() -> Self {
        Self::default()
    }

    /// Grows the membership tables so that `len` users are covered.
    pub fn resize(&mut self, len: usize) {
        if self.clients.len() < len {
            self.clients.resize(len, false);
            self.labels.resize(len, None);
        }
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn mark_client(&mut self, user: u32) {
        self.resize(user as usize + 1);
        self.clients[user as usize] = true;
    }

    pub fn is_client(&self, user: u32) -> bool {
        self.clients.get(user as usize).copied().unwrap_or(false)
    }

    pub fn label(&self, user: u32) -> Option<DemographicLabel> {
        self.labels.get(user as usize).copied().flatten()
    }

    pub fn labels(&self) -> &[Option<DemographicLabel>] {
        &self.labels
    }

    /// Stores a label; refuses users outside the client set so that the
    /// labeled set stays a subset of the clients.
    pub fn set_label(&mut self, user: u32, label: DemographicLabel) -> Result<Option<DemographicLabel>> {
        if !self.is_client(user) {
            return Err(Error::data(format!(
                "user {user} is not an operator client and cannot be labeled"
            )));
        }
        Ok(self.labels[user as usize].replace(label))
    }

    /// Dense indices of operator clients, ascending.
    pub fn clients(&self) -> Vec<u32> {
        self.clients
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| c.then_some(i as u32))
            .collect()
    }

    pub fn client_count(&self) -> usize {
        self.clients.iter().filter(|&&c| c).count()
    }

    /// Labeled users with their labels, ascending by index.
    pub fn labeled(&self) -> Vec<(u32, DemographicLabel)> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| (i as u32, l)))
            .collect()
    }

    /// Checks the containment chain labeled ⊆ clients ⊆ seen.
    pub fn check_invariants(&self, seen: usize) -> bool {
        self.clients.len() <= seen
            && self
                .labels
                .iter()
                .zip(&self.clients)
                .all(|(label, &client)| label.is_none() || client)
    }

    /// Reads an operator-client list: one user id per line.
    pub fn load_clients<R: BufRead>(&mut self, reader: R, users: &mut UserIndex) -> Result<u64> {
        let mut count = 0;
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io("<client list>", e))?;
            let id = line.trim();
            if id.is_empty() || id == "user_id" {
                continue;
            }
            let idx = users.intern(id);
            self.mark_client(idx);
            count += 1;
        }
        self.resize(users.len());
        Ok(count)
    }

    /// Reads `user_id,gender,age_years` rows. Rows naming a user that is not
    /// a known operator client are rejected and counted.
    pub fn load_ground_truth<R: BufRead>(
        &mut self,
        reader: R,
        users: &UserIndex,
        bounds: AgeBounds,
    ) -> Result<GroundTruthStats> {
        let mut stats = GroundTruthStats::default();
        for (line_no, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<ground truth>", e))?;
            let line = line.trim();
            if line.is_empty() || (line_no == 0 && line.starts_with("user_id")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                stats.malformed += 1;
                continue;
            }
            let Ok(gender) = fields[1].parse() else {
                stats.unknown_gender += 1;
                continue;
            };
            let age = match fields[2].parse::<u32>() {
                Ok(age) if bounds.contains(age) => age,
                _ => {
                    stats.bad_age += 1;
                    continue;
                }
            };
            let Some(user) = users.get(fields[0]).filter(|&u| self.is_client(u)) else {
                stats.subset_violations += 1;
                continue;
            };
            if self.set_label(user, DemographicLabel { gender, age })?.is_some() {
                stats.duplicates += 1;
            }
            stats.accepted += 1;
        }
        if stats.duplicates > 0 {
            warn!("{} duplicate ground-truth rows; last occurrence kept", stats.duplicates);
        }
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demographics::{AgeGroups, Gender};

    fn setup() -> (UserIndex, UserSets) {
        let mut users = UserIndex::new();
        let mut sets = UserSets::new();
        sets.load_clients("A1\nB2\n".as_bytes(), &mut users).unwrap();
        users.intern("Z9");
        sets.resize(users.len());
        (users, sets)
    }

    #[test]
    fn stores_label_and_group() {
        let (users, mut sets) = setup();
        let stats = sets
            .load_ground_truth("A1,F,34\n".as_bytes(), &users, AgeBounds::default())
            .unwrap();
        assert_eq!(stats.accepted, 1);
        let label = sets.label(users.get("A1").unwrap()).unwrap();
        assert_eq!(label.gender, Gender::Female);
        assert_eq!(AgeGroups::default().group_of(label.age), 1);
    }

    #[test]
    fn rejects_bad_rows() {
        let (users, mut sets) = setup();
        let stats = sets
            .load_ground_truth(
                "user_id,gender,age\nA1,X,34\nZ9,M,40\nB2,M,140\nQQ,M,30\nB2,M\n".as_bytes(),
                &users,
                AgeBounds::default(),
            )
            .unwrap();
        assert_eq!(stats.accepted, 0);
        assert_eq!(stats.unknown_gender, 1);
        // Z9 is seen but not a client, QQ is unknown altogether
        assert_eq!(stats.subset_violations, 2);
        assert_eq!(stats.bad_age, 1);
        assert_eq!(stats.malformed, 1);
        assert!(sets.check_invariants(users.len()));
    }

    #[test]
    fn duplicates_last_wins() {
        let (users, mut sets) = setup();
        let stats = sets
            .load_ground_truth("A1,F,34\nA1,M,60\n".as_bytes(), &users, AgeBounds::default())
            .unwrap();
        assert_eq!(stats.duplicates, 1);
        assert_eq!(
            sets.label(users.get("A1").unwrap()),
            Some(DemographicLabel {
                gender: Gender::Male,
                age: 60
            })
        );
    }

    #[test]
    fn interning_is_dense() {
        let mut users = UserIndex::new();
        assert_eq!(users.intern("x"), 0);
        assert_eq!(users.intern("y"), 1);
        assert_eq!(users.intern("x"), 0);
        assert_eq!(users.id(1), "y");
        assert_eq!(users.len(), 2);
    }
}
