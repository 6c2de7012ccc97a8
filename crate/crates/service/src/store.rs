//! Live sessions, their journals and the views served from them.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use pathpref_core::graph::VertexId;
use pathpref_core::problem::LearningProblem;
use pathpref_core::regions::RegionId;
use pathpref_core::scenario::{Point, Scenario};
use pathpref_core::scenarios::preset;
use pathpref_core::select::SelectorKind;
use pathpref_core::session::{BeliefModel, Feedback, Session, SessionConfig, SessionStatus};
use serde::{Deserialize, Serialize};

use crate::api::*;
use crate::error::ApiError;

/// One line of a session journal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Create {
        id: String,
        created_at: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<String>,
        scenario: serde_json::Value,
        task: usize,
        samples: usize,
        region_seed: u64,
        seed: u64,
        config: SessionConfig,
    },
    Feedback {
        version: u64,
        choice: Feedback,
    },
}

pub struct LiveSession {
    id: String,
    created_at: u64,
    version: u64,
    scenario: Arc<Scenario>,
    session: Session,
    journal: Option<File>,
}

type ProblemKey = (String, usize, usize, u64);

/// All sessions of a server.
///
/// The registry lock is held only to look up or insert entries; each
/// session has its own mutex, so requests for distinct sessions never wait
/// on each other.
pub struct Store {
    sessions: RwLock<HashMap<String, Arc<Mutex<LiveSession>>>>,
    problems: Mutex<HashMap<ProblemKey, Arc<LearningProblem>>>,
    journal_dir: Option<PathBuf>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            problems: Mutex::new(HashMap::new()),
            journal_dir: None,
        }
    }

    /// Opens a journal directory, replaying every `*.jsonl` file in it.
    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let store = Self {
            journal_dir: Some(dir.clone()),
            ..Self::in_memory()
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            match store.replay_journal(&path) {
                Ok(live) => {
                    let id = live.id.clone();
                    store.insert(id, live);
                }
                Err(e) => eprintln!("skipping journal {}: {e}", path.display()),
            }
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("registry poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert(&self, id: String, live: LiveSession) {
        self.sessions
            .write()
            .expect("registry poisoned")
            .insert(id, Arc::new(Mutex::new(live)));
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<LiveSession>>, ApiError> {
        self.sessions
            .read()
            .expect("registry poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    fn problem(
        &self,
        scenario: Arc<Scenario>,
        cache_key: Option<&str>,
        task: usize,
        samples: usize,
        region_seed: u64,
    ) -> Result<Arc<LearningProblem>, ApiError> {
        let key = cache_key.map(|k| (k.to_string(), task, samples, region_seed));
        if let Some(k) = &key {
            if let Some(p) = self.problems.lock().expect("cache poisoned").get(k) {
                return Ok(p.clone());
            }
        }
        let problem = Arc::new(LearningProblem::build(
            scenario,
            task,
            samples,
            region_seed,
        )?);
        if let Some(k) = key {
            self.problems
                .lock()
                .expect("cache poisoned")
                .insert(k, problem.clone());
        }
        Ok(problem)
    }

    /// Builds and registers a new session. CPU-heavy: region sampling.
    pub fn create(&self, req: CreateSession) -> Result<CreateResponse, ApiError> {
        if req.samples == 0 || req.samples > MAX_SAMPLES {
            return Err(ApiError::BadRequest(format!(
                "samples must lie in 1..={MAX_SAMPLES}"
            )));
        }
        let (scenario, cache_key) = match (&req.preset, &req.scenario) {
            (Some(name), None) => (preset(name)?, Some(name.as_str())),
            (None, Some(doc)) => (Scenario::from_json_value(doc.clone())?, None),
            _ => {
                return Err(ApiError::BadRequest(
                    "give exactly one of `preset` and `scenario`".into(),
                ))
            }
        };
        req.config.validate()?;
        let scenario = Arc::new(scenario);
        let problem = self.problem(
            scenario.clone(),
            cache_key,
            req.task,
            req.samples,
            req.region_seed,
        )?;
        let session = Session::new(problem, req.config.clone(), req.seed)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let created_at = now();
        let journal = match &self.journal_dir {
            Some(dir) => {
                let mut f = OpenOptions::new()
                    .create_new(true)
                    .append(true)
                    .open(dir.join(format!("{id}.jsonl")))?;
                let record = Record::Create {
                    id: id.clone(),
                    created_at,
                    preset: req.preset.clone(),
                    scenario: scenario.to_json_value(),
                    task: req.task,
                    samples: req.samples,
                    region_seed: req.region_seed,
                    seed: req.seed,
                    config: req.config,
                };
                append(&mut f, &record)?;
                Some(f)
            }
            None => None,
        };
        let live = LiveSession {
            id: id.clone(),
            created_at,
            version: 0,
            scenario,
            session,
            journal,
        };
        let response = live.create_response();
        self.insert(id, live);
        Ok(response)
    }

    fn replay_journal(&self, path: &Path) -> Result<LiveSession, ApiError> {
        let reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Record>(&line) {
                Ok(r) => records.push(r),
                // A torn final write; everything before it is intact.
                Err(_) => break,
            }
        }
        let mut records = records.into_iter();
        let Some(Record::Create {
            id,
            created_at,
            preset: preset_name,
            scenario,
            task,
            samples,
            region_seed,
            seed,
            config,
        }) = records.next()
        else {
            return Err(ApiError::BadRequest("journal lacks a create record".into()));
        };
        let scenario = Arc::new(Scenario::from_json_value(scenario)?);
        let problem = self.problem(
            scenario.clone(),
            preset_name.as_deref(),
            task,
            samples,
            region_seed,
        )?;
        let answers: Vec<Feedback> = records
            .map(|r| match r {
                Record::Feedback { choice, .. } => Ok(choice),
                Record::Create { .. } => Err(ApiError::BadRequest(
                    "journal holds two create records".into(),
                )),
            })
            .collect::<Result<_, _>>()?;
        let version = answers.len() as u64;
        let session = Session::replay(problem, config, seed, answers)?;
        let journal = OpenOptions::new().append(true).open(path)?;
        Ok(LiveSession {
            id,
            created_at,
            version,
            scenario,
            session,
            journal: Some(journal),
        })
    }
}

fn append(f: &mut File, record: &Record) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    f.write_all(&line)?;
    f.sync_data()
}

impl LiveSession {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    fn vertex_point(&self, v: VertexId) -> Option<Point> {
        let vx = self.scenario.graph.vertices().get(v.index())?;
        Some([vx.x?, vx.y?])
    }

    pub fn path_view(&self, r: RegionId) -> PathView {
        let path = &self.session.problem().regions().regions()[r.index()].path;
        let polyline = path
            .vertices(&self.scenario.graph)
            .into_iter()
            .map(|v| self.vertex_point(v))
            .collect::<Option<Vec<_>>>()
            .unwrap_or_default();
        PathView {
            region_id: r.0,
            edge_ids: path.edge_ids.iter().map(|e| e.0).collect(),
            polyline,
            time: path.time,
            violations: path.violations.clone(),
        }
    }

    pub fn render(&self) -> RenderResponse {
        let task = self
            .session
            .problem()
            .task()
            .expect("built from a scenario");
        RenderResponse {
            api_version: API_VERSION,
            scenario: self.scenario.name().to_string(),
            task,
            start: self.vertex_point(task.start),
            goal: self.vertex_point(task.goal),
            constraints: self
                .scenario
                .constraints
                .iter()
                .map(|c| ConstraintView {
                    id: c.id,
                    kind: c.kind,
                    color: c.kind.color().to_string(),
                    weight_lo: c.weight_lo,
                    weight_hi: c.weight_hi,
                })
                .collect(),
            render: self.scenario.render.clone(),
        }
    }

    fn create_response(&self) -> CreateResponse {
        let status = self.session.status();
        CreateResponse {
            api_version: API_VERSION,
            id: self.id.clone(),
            version: self.version,
            created_at: self.created_at,
            status,
            converged: status == SessionStatus::Converged,
            budget: self.session.config().budget,
            region_count: self.session.problem().region_count(),
            initial_path: self.path_view(self.session.current_region()),
            render: self.render(),
        }
    }

    fn best(&self) -> Result<BestView, ApiError> {
        let belief = self.session.belief();
        let (r, w) = self.session.best()?;
        Ok(BestView {
            region_id: r.0,
            probability: belief[r.index()],
            weight: w.0,
            path: self.path_view(r),
        })
    }

    pub fn final_result(&self) -> Result<FinalResult, ApiError> {
        Ok(FinalResult {
            api_version: API_VERSION,
            id: self.id.clone(),
            version: self.version,
            iteration: self.session.iteration(),
            status: self.session.status(),
            best: self.best()?,
        })
    }

    fn finished(&self) -> ApiError {
        match self.final_result() {
            Ok(result) => ApiError::Finished(Box::new(result)),
            Err(e) => e,
        }
    }

    pub fn query(&self) -> Result<QueryResponse, ApiError> {
        let pair = self
            .session
            .pending_query()
            .ok_or_else(|| self.finished())?;
        Ok(QueryResponse {
            api_version: API_VERSION,
            id: self.id.clone(),
            version: self.version,
            iteration: self.session.iteration(),
            budget: self.session.config().budget,
            current: self.path_view(pair.current),
            proposed: self.path_view(pair.proposed),
        })
    }

    /// Applies an answer if it refers to the current version.
    pub fn feedback(&mut self, req: FeedbackRequest) -> Result<FeedbackResponse, ApiError> {
        if self.session.pending_query().is_none() {
            return Err(self.finished());
        }
        if req.version != self.version {
            return Err(ApiError::Stale {
                current: self.version,
                given: req.version,
            });
        }
        let out = self.session.step(req.choice)?;
        self.version += 1;
        if let Some(f) = self.journal.as_mut() {
            append(
                f,
                &Record::Feedback {
                    version: self.version,
                    choice: req.choice,
                },
            )?;
        }
        Ok(FeedbackResponse {
            api_version: API_VERSION,
            id: self.id.clone(),
            version: self.version,
            iteration: self.session.iteration(),
            current_changed: out.current_changed,
            status: out.status,
            current: self.path_view(self.session.current_region()),
        })
    }

    pub fn posterior(&self, k: usize) -> Result<PosteriorResponse, ApiError> {
        let belief = self.session.belief();
        let mut order: Vec<usize> = (0..belief.len()).collect();
        order.sort_by(|&a, &b| belief[b].total_cmp(&belief[a]).then(a.cmp(&b)));
        let top = order
            .into_iter()
            .take(k)
            .map(|r| PosteriorItem {
                region_id: r as u32,
                probability: belief[r],
                path: self.path_view(RegionId(r as u32)),
            })
            .collect();
        let config = self.session.config();
        let mass = self.session.masses().is_some()
            && match config.belief {
                BeliefModel::Auto => config.selector == SelectorKind::Mvr,
                BeliefModel::Bayes => false,
                BeliefModel::Mass => true,
            };
        Ok(PosteriorResponse {
            api_version: API_VERSION,
            id: self.id.clone(),
            version: self.version,
            iteration: self.session.iteration(),
            belief: if mass {
                BeliefKind::Mass
            } else {
                BeliefKind::Bayes
            },
            region_count: belief.len(),
            top,
            best: self.best()?,
        })
    }
}
