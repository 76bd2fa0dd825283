//! Body-part partitions: named groups of joints and bitmask coalitions.
//!
//! The skeleton is divided into five parts — trunk, left/right arm,
//! left/right leg. Coalitions of parts are represented as a 5-bit mask
//! ([`PartSet`]) so that subset enumeration, complements, and table indexing
//! are cheap and allocation-free.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of body parts. Fixed: the part policy and saliency tables are
/// defined over exactly these five groups.
pub const NUM_PARTS: usize = 5;

/// Canonical part names, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartName {
    Trunk,
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
}

impl PartName {
    /// All parts in canonical order. Bit `i` of a [`PartSet`] corresponds to
    /// `ALL[i]`.
    pub const ALL: [PartName; NUM_PARTS] = [
        PartName::Trunk,
        PartName::LeftArm,
        PartName::RightArm,
        PartName::LeftLeg,
        PartName::RightLeg,
    ];

    /// Canonical index of this part (its bit position).
    pub fn index(self) -> usize {
        self as usize
    }

    /// Part at canonical index `i`.
    pub fn from_index(i: usize) -> Option<PartName> {
        Self::ALL.get(i).copied()
    }

    /// Snake-case name used in files and exports.
    pub fn as_str(self) -> &'static str {
        match self {
            PartName::Trunk => "trunk",
            PartName::LeftArm => "left_arm",
            PartName::RightArm => "right_arm",
            PartName::LeftLeg => "left_leg",
            PartName::RightLeg => "right_leg",
        }
    }
}

impl fmt::Display for PartName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PartName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PartName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown body part name {s:?}")))
    }
}

/// A coalition of body parts, stored as a 5-bit mask over
/// [`PartName::ALL`] order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartSet(u8);

impl PartSet {
    pub const EMPTY: PartSet = PartSet(0);
    /// The full player set: all five parts.
    pub const FULL: PartSet = PartSet((1 << NUM_PARTS) - 1);

    /// Coalition containing a single part.
    pub fn single(part: PartName) -> PartSet {
        PartSet(1 << part.index())
    }

    /// Build from any iterator of parts.
    pub fn from_parts(parts: impl IntoIterator<Item = PartName>) -> PartSet {
        parts
            .into_iter()
            .fold(PartSet::EMPTY, |acc, p| acc.with(p))
    }

    /// Raw bit mask (bits 0..5).
    pub fn bits(self) -> u8 {
        self.0
    }

    /// Reconstruct from a raw mask; bits above the five part bits error.
    pub fn from_bits(bits: u8) -> Result<PartSet> {
        if bits & !Self::FULL.0 != 0 {
            return Err(Error::Config(format!(
                "part-set mask {bits:#x} has bits outside the {NUM_PARTS} part range"
            )));
        }
        Ok(PartSet(bits))
    }

    pub fn contains(self, part: PartName) -> bool {
        self.0 & (1 << part.index()) != 0
    }

    pub fn with(self, part: PartName) -> PartSet {
        PartSet(self.0 | (1 << part.index()))
    }

    pub fn union(self, other: PartSet) -> PartSet {
        PartSet(self.0 | other.0)
    }

    pub fn intersection(self, other: PartSet) -> PartSet {
        PartSet(self.0 & other.0)
    }

    /// Complement within the full five-part player set.
    pub fn complement(self) -> PartSet {
        PartSet(!self.0 & Self::FULL.0)
    }

    pub fn is_subset_of(self, other: PartSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint_from(self, other: PartSet) -> bool {
        self.0 & other.0 == 0
    }

    /// Number of parts in the coalition.
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Member parts in canonical order.
    pub fn iter(self) -> impl Iterator<Item = PartName> {
        PartName::ALL
            .into_iter()
            .filter(move |p| self.contains(*p))
    }

    /// All subsets of this coalition (including the empty set and itself),
    /// in ascending bit-mask order. The order is fixed and documented: table
    /// layouts and summation orders elsewhere rely on it being reproducible.
    pub fn subsets(self) -> impl Iterator<Item = PartSet> {
        let mask = self.0;
        (0..=mask).filter(move |s| s & mask == *s).map(PartSet)
    }

    /// Canonical label: member part names in canonical order joined with
    /// `+`, e.g. `"trunk+left_arm"`. The empty coalition is `"none"`.
    pub fn label(self) -> String {
        if self.is_empty() {
            return "none".to_string();
        }
        self.iter()
            .map(|p| p.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Parse a `+`-joined label. Order-insensitive; duplicates error.
    pub fn parse_label(s: &str) -> Result<PartSet> {
        if s == "none" {
            return Ok(PartSet::EMPTY);
        }
        let mut set = PartSet::EMPTY;
        for name in s.split('+') {
            let part: PartName = name.trim().parse()?;
            if set.contains(part) {
                return Err(Error::Config(format!(
                    "duplicate part {part} in coalition label {s:?}"
                )));
            }
            set = set.with(part);
        }
        Ok(set)
    }
}

impl fmt::Display for PartSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl fmt::Debug for PartSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PartSet({})", self.label())
    }
}

/// One named part with its joint indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Part {
    pub name: PartName,
    pub joints: Vec<usize>,
}

/// A full partition of the skeleton's joints into the five parts.
///
/// Invariants enforced at construction: every part is non-empty, parts are
/// pairwise disjoint, and together they cover exactly `0..num_joints`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartPartition {
    /// Parts in canonical order; `parts[i].name == PartName::ALL[i]`.
    parts: Vec<Part>,
    num_joints: usize,
}

impl PartPartition {
    /// Validate and build a partition over `num_joints` joints.
    pub fn new(mut parts: Vec<Part>, num_joints: usize) -> Result<PartPartition> {
        if parts.len() != NUM_PARTS {
            return Err(Error::Config(format!(
                "partition must define exactly {NUM_PARTS} parts, got {}",
                parts.len()
            )));
        }
        parts.sort_by_key(|p| p.name.index());
        for (i, part) in parts.iter().enumerate() {
            if part.name.index() != i {
                return Err(Error::Config(format!(
                    "partition defines part {} more than once",
                    part.name
                )));
            }
            if part.joints.is_empty() {
                return Err(Error::Config(format!("part {} has no joints", part.name)));
            }
        }
        let mut owner = vec![None; num_joints];
        for part in &mut parts {
            part.joints.sort_unstable();
            for &j in &part.joints {
                if j >= num_joints {
                    return Err(Error::Config(format!(
                        "part {} references joint {j}, but the skeleton has {num_joints} joints"
                    , part.name)));
                }
                if let Some(prev) = owner[j] {
                    return Err(Error::Config(format!(
                        "joint {j} assigned to both {prev} and {}",
                        part.name
                    )));
                }
                owner[j] = Some(part.name);
            }
        }
        if let Some(j) = owner.iter().position(|o| o.is_none()) {
            return Err(Error::Config(format!(
                "joint {j} is not assigned to any part"
            )));
        }
        Ok(PartPartition { parts, num_joints })
    }

    /// Built-in partition for the 25-joint skeleton layout.
    ///
    /// Joint indices are 0-based:
    /// * trunk — spine base/mid, neck, head, both hips, spine-shoulder:
    ///   `[0, 1, 2, 3, 12, 16, 20]`
    /// * left arm — shoulder, elbow, wrist, hand, hand tip, thumb:
    ///   `[4, 5, 6, 7, 21, 22]`
    /// * right arm — shoulder, elbow, wrist, hand, hand tip, thumb:
    ///   `[8, 9, 10, 11, 23, 24]`
    /// * left leg — knee, ankle, foot: `[13, 14, 15]`
    /// * right leg — knee, ankle, foot: `[17, 18, 19]`
    ///
    /// Hip joints sit in the trunk group (they move with the torso), so each
    /// leg contributes its three distal joints.
    pub fn builtin_25() -> PartPartition {
        let parts = vec![
            Part {
                name: PartName::Trunk,
                joints: vec![0, 1, 2, 3, 12, 16, 20],
            },
            Part {
                name: PartName::LeftArm,
                joints: vec![4, 5, 6, 7, 21, 22],
            },
            Part {
                name: PartName::RightArm,
                joints: vec![8, 9, 10, 11, 23, 24],
            },
            Part {
                name: PartName::LeftLeg,
                joints: vec![13, 14, 15],
            },
            Part {
                name: PartName::RightLeg,
                joints: vec![17, 18, 19],
            },
        ];
        PartPartition::new(parts, 25).expect("built-in partition is valid")
    }

    /// Default partition for a skeleton with `num_joints` joints. Only the
    /// 25-joint layout has a built-in default; other sizes need an explicit
    /// partition file.
    pub fn default_for(num_joints: usize) -> Result<PartPartition> {
        if num_joints == 25 {
            Ok(PartPartition::builtin_25())
        } else {
            Err(Error::Config(format!(
                "no built-in partition for {num_joints}-joint skeletons; \
                 supply a partition file"
            )))
        }
    }

    /// Parse a partition from its JSON representation: a list of
    /// `{"name": ..., "joints": [...]}` objects covering all five parts.
    pub fn from_json_str(json: &str, num_joints: usize) -> Result<PartPartition> {
        let parts: Vec<Part> = serde_json::from_str(json)
            .map_err(|e| Error::Config(format!("malformed partition json: {e}")))?;
        PartPartition::new(parts, num_joints)
    }

    /// Load a partition file (see [`PartPartition::from_json_str`]).
    pub fn from_json_file(path: &Path, num_joints: usize) -> Result<PartPartition> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PartPartition::from_json_str(&text, num_joints)
    }

    /// Serialize to the JSON representation accepted by
    /// [`PartPartition::from_json_str`].
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.parts).expect("partition serializes")
    }

    pub fn num_joints(&self) -> usize {
        self.num_joints
    }

    /// Parts in canonical order.
    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    /// Joint indices of one part (sorted ascending).
    pub fn joints_of(&self, part: PartName) -> &[usize] {
        &self.parts[part.index()].joints
    }

    /// Sorted joint indices of a coalition.
    pub fn joints_of_set(&self, set: PartSet) -> Vec<usize> {
        let mut joints: Vec<usize> = set
            .iter()
            .flat_map(|p| self.joints_of(p).iter().copied())
            .collect();
        joints.sort_unstable();
        joints
    }

    /// Number of joints in a coalition.
    pub fn joint_count_of_set(&self, set: PartSet) -> usize {
        set.iter().map(|p| self.joints_of(p).len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_25_is_a_partition() {
        let p = PartPartition::builtin_25();
        assert_eq!(p.num_joints(), 25);
        let all = p.joints_of_set(PartSet::FULL);
        assert_eq!(all, (0..25).collect::<Vec<_>>());
        assert_eq!(p.joint_count_of_set(PartSet::FULL), 25);
        assert_eq!(p.joints_of(PartName::LeftLeg), &[13, 14, 15]);
        assert_eq!(p.joint_count_of_set(PartSet::single(PartName::Trunk)), 7);
    }

    #[test]
    fn default_for_rejects_other_joint_counts() {
        assert!(PartPartition::default_for(25).is_ok());
        assert!(PartPartition::default_for(17).is_err());
    }

    #[test]
    fn set_operations() {
        let arms = PartSet::from_parts([PartName::LeftArm, PartName::RightArm]);
        assert_eq!(arms.len(), 2);
        assert!(arms.contains(PartName::LeftArm));
        assert!(!arms.contains(PartName::Trunk));
        let rest = arms.complement();
        assert_eq!(rest.len(), 3);
        assert!(rest.contains(PartName::Trunk));
        assert!(arms.is_disjoint_from(rest));
        assert_eq!(arms.union(rest), PartSet::FULL);
        assert_eq!(arms.intersection(rest), PartSet::EMPTY);
    }

    #[test]
    fn subsets_enumerates_in_ascending_mask_order() {
        let set = PartSet::from_parts([PartName::Trunk, PartName::LeftArm]);
        let subs: Vec<u8> = set.subsets().map(|s| s.bits()).collect();
        assert_eq!(subs, vec![0b00, 0b01, 0b10, 0b11]);
        assert_eq!(PartSet::FULL.subsets().count(), 32);
        assert_eq!(PartSet::EMPTY.subsets().count(), 1);
    }

    #[test]
    fn labels_round_trip() {
        let set = PartSet::from_parts([PartName::LeftArm, PartName::Trunk]);
        // Canonical order regardless of construction order.
        assert_eq!(set.label(), "trunk+left_arm");
        assert_eq!(PartSet::parse_label("trunk+left_arm").unwrap(), set);
        assert_eq!(PartSet::parse_label("left_arm+trunk").unwrap(), set);
        assert_eq!(PartSet::parse_label("none").unwrap(), PartSet::EMPTY);
        assert!(PartSet::parse_label("trunk+trunk").is_err());
        assert!(PartSet::parse_label("wings").is_err());
    }

    #[test]
    fn partition_validation_rejects_bad_inputs() {
        // Missing coverage.
        let mut parts = PartPartition::builtin_25().parts().to_vec();
        parts[0].joints.pop();
        assert!(PartPartition::new(parts, 25).is_err());

        // Overlap.
        let mut parts = PartPartition::builtin_25().parts().to_vec();
        parts[1].joints.push(0);
        assert!(PartPartition::new(parts, 25).is_err());

        // Out of range.
        let mut parts = PartPartition::builtin_25().parts().to_vec();
        parts[4].joints.push(25);
        assert!(PartPartition::new(parts, 25).is_err());

        // Duplicate part name.
        let mut parts = PartPartition::builtin_25().parts().to_vec();
        parts[4].name = PartName::Trunk;
        assert!(PartPartition::new(parts, 25).is_err());
    }

    #[test]
    fn partition_json_round_trip() {
        let p = PartPartition::builtin_25();
        let json = p.to_json_string();
        let q = PartPartition::from_json_str(&json, 25).unwrap();
        assert_eq!(p, q);
    }
}
