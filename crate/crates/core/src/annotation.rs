//! Confirm/divide annotation of one initial cluster.
//!
//! Each round the annotator leaves checked the models that are mutually
//! similar; the checked set is peeled off as a confirmed subcluster and the
//! unchecked models go to the next round. An empty checked set declares the
//! remaining models mutually dissimilar. Once terminal, the subclusters fix a
//! label for every pair of members: `+1` inside a subcluster, `-1` across.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::simgraph::{EdgeKey, EdgeLabel, LabeledEdgeSet, ModelId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationRound {
    pub round_index: usize,
    pub checked: Vec<ModelId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAnnotation {
    cluster_id: u32,
    members: Vec<ModelId>,
    remaining: Vec<ModelId>,
    subclusters: Vec<Vec<ModelId>>,
    rounds: Vec<AnnotationRound>,
    terminal: bool,
}

impl ClusterAnnotation {
    /// A fresh annotation with every member remaining. A cluster of a single
    /// model has no pairs to label and starts out terminal.
    pub fn new(cluster_id: u32, members: Vec<ModelId>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid(format!("cluster {cluster_id} has no members")));
        }
        let mut seen = HashSet::new();
        for m in &members {
            if !seen.insert(m) {
                return Err(Error::DuplicateModel(m.clone()));
            }
        }
        let mut state = ClusterAnnotation {
            cluster_id,
            remaining: members.clone(),
            members,
            subclusters: Vec::new(),
            rounds: Vec::new(),
            terminal: false,
        };
        state.settle();
        Ok(state)
    }

    pub fn cluster_id(&self) -> u32 {
        self.cluster_id
    }

    pub fn members(&self) -> &[ModelId] {
        &self.members
    }

    pub fn remaining(&self) -> &[ModelId] {
        &self.remaining
    }

    pub fn subclusters(&self) -> &[Vec<ModelId>] {
        &self.subclusters
    }

    pub fn rounds(&self) -> &[AnnotationRound] {
        &self.rounds
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    /// Index the next submitted round will get.
    pub fn next_round(&self) -> usize {
        self.rounds.len()
    }

    /// Applies one checkbox round and returns the resulting state.
    pub fn apply_round(&self, checked: &[ModelId]) -> Result<Self> {
        if self.terminal {
            return Err(Error::AlreadyTerminal);
        }
        let remaining: HashSet<&ModelId> = self.remaining.iter().collect();
        let mut foreign = Vec::new();
        for id in checked {
            if !remaining.contains(id) && !foreign.contains(id) {
                foreign.push(id.clone());
            }
        }
        if !foreign.is_empty() {
            return Err(Error::NotRemaining(foreign));
        }
        let checked_set: HashSet<&ModelId> = checked.iter().collect();
        // Keep member order so the state does not depend on submission order.
        let peeled: Vec<ModelId> = self.remaining.iter().filter(|m| checked_set.contains(m)).cloned().collect();

        let mut next = self.clone();
        next.rounds.push(AnnotationRound { round_index: self.rounds.len(), checked: peeled.clone() });
        if peeled.is_empty() {
            next.subclusters.extend(next.remaining.drain(..).map(|m| vec![m]));
        } else {
            next.remaining.retain(|m| !checked_set.contains(m));
            next.subclusters.push(peeled);
        }
        next.settle();
        Ok(next)
    }

    // At most one model left means nothing remains to decide.
    fn settle(&mut self) {
        if self.remaining.len() <= 1 {
            if let Some(last) = self.remaining.pop() {
                self.subclusters.push(vec![last]);
            }
            self.terminal = true;
        }
    }

    /// Labels every pair of members: `+1` within a subcluster, `-1` across.
    pub fn derive_edges(&self) -> Result<LabeledEdgeSet> {
        let mut out = LabeledEdgeSet::new(String::new());
        self.derive_edges_into(&mut out)?;
        Ok(out)
    }

    pub fn derive_edges_into(&self, out: &mut LabeledEdgeSet) -> Result<()> {
        if !self.terminal {
            return Err(Error::NotTerminal);
        }
        for (s, block) in self.subclusters.iter().enumerate() {
            for (i, a) in block.iter().enumerate() {
                for b in &block[i + 1..] {
                    out.insert(EdgeKey::new(a.clone(), b.clone())?, EdgeLabel::Positive);
                }
                for other in &self.subclusters[s + 1..] {
                    for b in other {
                        out.insert(EdgeKey::new(a.clone(), b.clone())?, EdgeLabel::Negative);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Replays a sequence of rounds from a fresh state.
pub fn replay(cluster_id: u32, members: Vec<ModelId>, rounds: &[Vec<ModelId>]) -> Result<ClusterAnnotation> {
    let mut state = ClusterAnnotation::new(cluster_id, members)?;
    for checked in rounds {
        state = state.apply_round(checked)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgraph::mid;

    fn ids(names: &[&str]) -> Vec<ModelId> {
        names.iter().map(|n| mid(n)).collect()
    }

    fn label(set: &LabeledEdgeSet, a: &str, b: &str) -> i8 {
        set.label(&EdgeKey::new(mid(a), mid(b)).unwrap()).value()
    }

    #[test]
    fn confirm_all() {
        let s = replay(0, ids(&["a", "b", "c", "d"]), &[ids(&["a", "b", "c", "d"])]).unwrap();
        assert!(s.is_terminal());
        assert_eq!(s.subclusters(), &[ids(&["a", "b", "c", "d"])]);
        let e = s.derive_edges().unwrap();
        assert_eq!(e.len(), 6);
        assert!(e.iter().all(|(_, l)| l == EdgeLabel::Positive));
    }

    #[test]
    fn empty_round_makes_singletons() {
        let s = replay(0, ids(&["a", "b", "c"]), &[vec![]]).unwrap();
        assert!(s.is_terminal());
        assert_eq!(s.subclusters(), &[ids(&["a"]), ids(&["b"]), ids(&["c"])]);
        assert!(s.derive_edges().unwrap().iter().all(|(_, l)| l == EdgeLabel::Negative));
    }

    #[test]
    fn two_round_split() {
        let s = ClusterAnnotation::new(0, ids(&["a", "b", "c", "d"])).unwrap();
        let s = s.apply_round(&ids(&["b", "a"])).unwrap();
        assert!(!s.is_terminal());
        assert_eq!(s.remaining(), ids(&["c", "d"]).as_slice());
        let s = s.apply_round(&ids(&["c", "d"])).unwrap();
        assert!(s.is_terminal());
        assert_eq!(s.subclusters(), &[ids(&["a", "b"]), ids(&["c", "d"])]);
        let e = s.derive_edges().unwrap();
        assert_eq!((label(&e, "a", "b"), label(&e, "c", "d")), (1, 1));
        for (x, y) in [("a", "c"), ("a", "d"), ("b", "c"), ("b", "d")] {
            assert_eq!(label(&e, x, y), -1);
        }
    }

    #[test]
    fn last_model_becomes_singleton() {
        let s = replay(0, ids(&["a", "b", "c"]), &[ids(&["a", "b"])]).unwrap();
        assert!(s.is_terminal());
        assert_eq!(s.subclusters(), &[ids(&["a", "b"]), ids(&["c"])]);
        let single = ClusterAnnotation::new(1, ids(&["z"])).unwrap();
        assert!(single.is_terminal());
        assert!(single.derive_edges().unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let s = ClusterAnnotation::new(0, ids(&["a", "b", "c"])).unwrap();
        match s.apply_round(&ids(&["a", "x", "x"])) {
            Err(Error::NotRemaining(bad)) => assert_eq!(bad, ids(&["x"])),
            other => panic!("{other:?}"),
        }
        assert!(matches!(s.derive_edges(), Err(Error::NotTerminal)));
        let s = s.apply_round(&ids(&["a"])).unwrap();
        assert!(matches!(s.apply_round(&ids(&["a"])), Err(Error::NotRemaining(_))));
        let done = s.apply_round(&[]).unwrap();
        assert!(matches!(done.apply_round(&[]), Err(Error::AlreadyTerminal)));
        assert!(ClusterAnnotation::new(0, vec![]).is_err());
        assert!(ClusterAnnotation::new(0, ids(&["a", "a"])).is_err());
    }

    #[test]
    fn twelve_members_cover_all_pairs() {
        let members: Vec<ModelId> = (0..12).map(|i| mid(&format!("m{i:02}"))).collect();
        let rounds = vec![
            vec![members[3].clone(), members[7].clone(), members[0].clone()],
            vec![members[1].clone()],
            vec![members[2].clone(), members[4].clone(), members[5].clone(), members[6].clone()],
            vec![],
        ];
        let s = replay(0, members, &rounds).unwrap();
        assert!(s.is_terminal());
        assert_eq!(s.derive_edges().unwrap().len(), 66);
    }

    #[test]
    fn subcluster_order_does_not_matter() {
        let a = replay(0, ids(&["a", "b", "c", "d", "e"]), &[ids(&["a", "c"]), ids(&["b", "e"])]).unwrap();
        let b = replay(0, ids(&["a", "b", "c", "d", "e"]), &[ids(&["d"]), ids(&["b", "e"]), ids(&["c", "a"])]).unwrap();
        assert_eq!(a.derive_edges().unwrap(), b.derive_edges().unwrap());
    }
}
