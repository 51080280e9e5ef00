//! Session state for every (annotator, cluster) pair, driven by the round
//! log.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;

use cadsim_core::annotation::ClusterAnnotation;
use cadsim_core::simgraph::{consistency, LabeledEdgeSet, ModelId, Partition};
use serde::Serialize;

use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::log::{RoundLog, RoundRecord};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Task {
    pub cluster_id: u32,
    pub members: Vec<String>,
    pub remaining: Vec<String>,
    pub round: usize,
    pub previews: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubmitOutcome {
    pub cluster_id: u32,
    pub round: usize,
    pub remaining: Vec<String>,
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnnotatorProgress {
    pub annotator: String,
    pub completed: usize,
    pub total: usize,
    pub edges_labeled: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairConsistency {
    pub a: String,
    pub b: String,
    /// Agreement on the shared support; `null` when nothing is shared.
    pub consistency: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Progress {
    pub annotators: Vec<AnnotatorProgress>,
    pub consistency: Vec<PairConsistency>,
}

type Clock = Box<dyn Fn() -> String + Send>;

pub struct AnnotationStore {
    tasks: BTreeMap<u32, Vec<ModelId>>,
    models: HashSet<ModelId>,
    tokens: HashMap<String, String>,
    names: Vec<String>,
    sessions: HashMap<String, BTreeMap<u32, ClusterAnnotation>>,
    log: Option<RoundLog>,
    preview_dir: Option<PathBuf>,
    clock: Clock,
}

fn strings(ids: &[ModelId]) -> Vec<String> {
    ids.iter().map(|m| m.as_str().to_string()).collect()
}

/// Percent-encodes everything outside the URL path "unreserved" set.
fn encode_path_segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl AnnotationStore {
    /// In-memory store over the clusters of `tasks`; nothing is persisted
    /// until a log is attached.
    pub fn new(tasks: &Partition, annotators: &BTreeMap<String, String>) -> Self {
        let mut by_cluster = BTreeMap::new();
        for (c, members) in tasks.clusters().into_iter().enumerate() {
            by_cluster.insert(c as u32, members);
        }
        AnnotationStore {
            tasks: by_cluster,
            models: tasks.ids().iter().cloned().collect(),
            tokens: annotators.iter().map(|(name, token)| (token.clone(), name.clone())).collect(),
            names: annotators.keys().cloned().collect(),
            sessions: HashMap::new(),
            log: None,
            preview_dir: None,
            clock: Box::new(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)),
        }
    }

    pub fn open(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let tasks = Partition::read(&config.task_file)?;
        let mut store = Self::new(&tasks, &config.annotators);
        store.preview_dir = config.preview_dir.clone();
        store.attach_log(RoundLog::open(&config.log_path)?)?;
        Ok(store)
    }

    pub fn with_clock(mut self, clock: impl Fn() -> String + Send + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn with_preview_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.preview_dir = dir;
        self
    }

    /// Replays `records` and routes all further rounds to `log`.
    pub fn attach_log(&mut self, (log, records): (RoundLog, Vec<RoundRecord>)) -> Result<(), ServiceError> {
        for (i, rec) in records.iter().enumerate() {
            self.replay_record(rec).map_err(|e| ServiceError::Log(format!("record {}: {e}", i + 1)))?;
        }
        self.log = Some(log);
        Ok(())
    }

    /// Applies one logged round without re-logging it.
    pub fn replay_record(&mut self, rec: &RoundRecord) -> Result<(), ServiceError> {
        if !self.names.contains(&rec.annotator) {
            return Err(ServiceError::Log(format!("annotator {} is not configured", rec.annotator)));
        }
        let state = self.session(&rec.annotator, rec.cluster)?;
        if rec.round != state.next_round() {
            return Err(ServiceError::RoundMismatch { expected: state.next_round(), got: rec.round });
        }
        let checked = self.parse_checked(&rec.checked)?;
        let next = state.apply_round(&checked).map_err(map_round_error(rec.cluster))?;
        self.sessions.entry(rec.annotator.clone()).or_default().insert(rec.cluster, next);
        Ok(())
    }

    pub fn annotator(&self, token: &str) -> Result<&str, ServiceError> {
        self.tokens.get(token).map(String::as_str).ok_or(ServiceError::Unauthorized)
    }

    pub fn annotators(&self) -> &[String] {
        &self.names
    }

    fn session(&self, name: &str, cluster: u32) -> Result<ClusterAnnotation, ServiceError> {
        if let Some(s) = self.sessions.get(name).and_then(|m| m.get(&cluster)) {
            return Ok(s.clone());
        }
        let members = self.tasks.get(&cluster).ok_or(ServiceError::UnknownCluster(cluster))?;
        Ok(ClusterAnnotation::new(cluster, members.clone())?)
    }

    fn parse_checked(&self, checked: &[String]) -> Result<Vec<ModelId>, ServiceError> {
        let mut bad = Vec::new();
        let mut ids = Vec::with_capacity(checked.len());
        for c in checked {
            match ModelId::new(c.clone()) {
                Ok(id) => ids.push(id),
                Err(_) => bad.push(c.clone()),
            }
        }
        if bad.is_empty() {
            Ok(ids)
        } else {
            Err(ServiceError::NotRemaining(bad))
        }
    }

    fn annotatable(&self) -> impl Iterator<Item = (&u32, &Vec<ModelId>)> + '_ {
        self.tasks.iter().filter(|(_, m)| m.len() >= 2)
    }

    fn completed_sessions<'a>(&'a self, name: &str) -> impl Iterator<Item = &'a ClusterAnnotation> + 'a {
        self.sessions.get(name).into_iter().flat_map(|m| m.values()).filter(|s| s.is_terminal())
    }

    fn task_view(&self, state: &ClusterAnnotation) -> Task {
        Task {
            cluster_id: state.cluster_id(),
            members: strings(state.members()),
            remaining: strings(state.remaining()),
            round: state.next_round(),
            previews: state.members().iter().map(|m| format!("/api/preview/{}.xyz", encode_path_segment(m.as_str()))).collect(),
        }
    }

    /// The annotator's in-progress cluster if any, else the lowest-id cluster
    /// they have not completed. `None` once everything is done.
    pub fn next_cluster(&self, token: &str) -> Result<Option<Task>, ServiceError> {
        let name = self.annotator(token)?;
        let sessions = self.sessions.get(name);
        if let Some(s) = sessions.and_then(|m| m.values().find(|s| !s.is_terminal())) {
            return Ok(Some(self.task_view(s)));
        }
        for (&id, _) in self.annotatable() {
            if sessions.and_then(|m| m.get(&id)).is_none() {
                return Ok(Some(self.task_view(&self.session(name, id)?)));
            }
        }
        Ok(None)
    }

    /// Applies a round, appending it to the log before the state changes.
    ///
    /// `round`, when given, must be the index this round will get. Repeating
    /// the most recent round with the same checked set is acknowledged again
    /// without a second record.
    pub fn submit(&mut self, token: &str, cluster: u32, checked: &[String], round: Option<usize>) -> Result<SubmitOutcome, ServiceError> {
        let name = self.annotator(token)?.to_string();
        let state = self.session(&name, cluster)?;
        let ids = self.parse_checked(checked)?;
        if let Some(r) = round {
            if r + 1 == state.next_round() {
                let prev: HashSet<&ModelId> = state.rounds()[r].checked.iter().collect();
                if prev == ids.iter().collect::<HashSet<_>>() {
                    return Ok(outcome(&state, r));
                }
            }
            if r != state.next_round() {
                return Err(ServiceError::RoundMismatch { expected: state.next_round(), got: r });
            }
        }
        let next = state.apply_round(&ids).map_err(map_round_error(cluster))?;
        let index = state.next_round();
        let rec = RoundRecord {
            annotator: name.clone(),
            cluster,
            round: index,
            checked: strings(&next.rounds()[index].checked),
            ts: (self.clock)(),
        };
        if let Some(log) = self.log.as_mut() {
            log.append(&rec)?;
        }
        let result = outcome(&next, index);
        self.sessions.entry(name).or_default().insert(cluster, next);
        Ok(result)
    }

    fn edges_of(&self, name: &str) -> Result<(usize, LabeledEdgeSet), ServiceError> {
        let mut set = LabeledEdgeSet::new(name);
        let mut completed = 0;
        for s in self.completed_sessions(name) {
            s.derive_edges_into(&mut set)?;
            completed += 1;
        }
        Ok((completed, set))
    }

    /// Union of the labeled edges of every cluster the annotator completed.
    pub fn export(&self, token: &str) -> Result<LabeledEdgeSet, ServiceError> {
        let name = self.annotator(token)?;
        let (completed, set) = self.edges_of(name)?;
        if completed == 0 {
            return Err(ServiceError::NothingCompleted);
        }
        Ok(set)
    }

    pub fn progress(&self) -> Result<Progress, ServiceError> {
        let total = self.annotatable().count();
        let mut annotators = Vec::new();
        let mut sets = Vec::new();
        for name in &self.names {
            let (completed, set) = self.edges_of(name)?;
            annotators.push(AnnotatorProgress { annotator: name.clone(), completed, total, edges_labeled: set.len() as u64 });
            sets.push(set);
        }
        let mut pairs = Vec::new();
        for i in 0..self.names.len() {
            for j in i + 1..self.names.len() {
                pairs.push(PairConsistency {
                    a: self.names[i].clone(),
                    b: self.names[j].clone(),
                    consistency: consistency(&sets[i], &sets[j]),
                });
            }
        }
        Ok(Progress { annotators, consistency: pairs })
    }

    /// Location of a model's preview cloud, if the model belongs to the task
    /// set and the file exists.
    pub fn preview_path(&self, model: &str) -> Result<PathBuf, ServiceError> {
        let unknown = || ServiceError::UnknownModel(model.to_string());
        let id = ModelId::new(model).map_err(|_| unknown())?;
        if !self.models.contains(&id) {
            return Err(unknown());
        }
        let dir = self.preview_dir.as_ref().ok_or_else(unknown)?;
        let path = dir.join(format!("{model}.xyz"));
        if path.is_file() {
            Ok(path)
        } else {
            Err(unknown())
        }
    }
}

fn outcome(state: &ClusterAnnotation, round: usize) -> SubmitOutcome {
    SubmitOutcome { cluster_id: state.cluster_id(), round, remaining: strings(state.remaining()), terminal: state.is_terminal() }
}

fn map_round_error(cluster: u32) -> impl Fn(cadsim_core::Error) -> ServiceError {
    move |e| match e {
        cadsim_core::Error::NotRemaining(ids) => ServiceError::NotRemaining(strings(&ids)),
        cadsim_core::Error::AlreadyTerminal => ServiceError::Terminal(cluster),
        other => ServiceError::Data(other),
    }
}
