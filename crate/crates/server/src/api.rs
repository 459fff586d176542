//! Transport-free request handling. Every method returns the exact JSON
//! body to send, so the HTTP layer stays a thin mapping.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use excessmort::calendar::YearMonth;
use excessmort::cli::{sha256_hex, DataSource, RunConfig, RunIndex};
use excessmort::evalkit::{excess, ExcessReport, MetricsReport};
use excessmort::forecasters::{Family, ModelConfig};
use excessmort::ingest::series_from_csv;
use excessmort::series::{DatasetSplit, MonthlySeries, Period, SplitSpec};
use excessmort::trials::{run_trials, with_workers, ResidualSource, TrialFailure, TrialOptions, TrialsError};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Months at the end of the requested training window held back to
/// calibrate the conformal intervals.
pub const VALIDATION_MONTHS: usize = 12;
/// Shortest training segment left after holding back validation.
pub const MIN_TRAIN_MONTHS: usize = 24;
/// Interactive requests are capped well below reporting-grade trial counts.
pub const MAX_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub census: Vec<TrialFailure>,
}

impl ApiError {
    fn new(status: u16, error: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            error,
            message: message.into(),
            census: Vec::new(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(404, "not_found", message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(400, "invalid_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(500, "internal", message)
    }

    pub fn body(&self) -> String {
        serde_json::to_string(self).expect("errors serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiProjectionRequest {
    /// Run whose observed series and selected configuration are used.
    pub run: String,
    pub family: Family,
    pub train_start: YearMonth,
    /// Last month of the training window (validation months included).
    pub train_end: YearMonth,
    pub horizon: usize,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
}

fn one() -> usize {
    1
}
fn default_seed() -> u64 {
    excessmort::trials::DEFAULT_BASE_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub run_id: String,
    pub request_hash: String,
    pub config: ModelConfig,
    pub seeds: Vec<u64>,
    pub residuals: ResidualSource,
    pub train: Period,
    pub validation: Period,
    pub projection: Period,
    pub version: &'static str,
    /// A run configuration whose `pipeline` run reproduces this projection
    /// (`projections/<family>.csv`). Absent for horizons under 12 months,
    /// which the pipeline's split rules do not allow.
    pub cli_config: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiProjectionResponse {
    pub request: ApiProjectionRequest,
    pub months: Vec<YearMonth>,
    pub observed: Vec<f64>,
    pub points: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub metrics: MetricsReport,
    pub excess: ExcessReport,
    pub trials_ok: usize,
    pub census: Vec<TrialFailure>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
enum JobState {
    Pending,
    Done(Arc<String>),
    Failed(ApiError),
}

#[derive(Debug)]
struct Job {
    state: Mutex<JobState>,
    done: AtomicUsize,
    total: usize,
}

/// Rounds every float to 6 decimals; integers pass through.
pub fn round6(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            *v = serde_json::json!((x * 1e6).round() / 1e6);
        }
        Value::Array(items) => items.iter_mut().for_each(round6),
        Value::Object(map) => map.values_mut().for_each(round6),
        _ => {}
    }
}

fn to_body<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("payloads serialize");
    round6(&mut v);
    serde_json::to_string(&v).expect("values serialize")
}

pub struct Api {
    root: PathBuf,
    workers: usize,
    cache: Mutex<HashMap<String, Arc<String>>>,
    jobs: Mutex<HashMap<String, Arc<Job>>>,
    /// One projection computes at a time, using the whole worker budget.
    compute: Mutex<()>,
}

impl Api {
    /// Serves the runs under `root` (the directory holding `index.json`).
    pub fn new(root: impl Into<PathBuf>, workers: usize) -> Self {
        let root = root.into();
        Self {
            // Provenance configs name files under the root, so they must not
            // depend on the server's working directory.
            root: std::path::absolute(&root).unwrap_or(root),
            workers: workers.max(1),
            cache: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            compute: Mutex::new(()),
        }
    }

    pub fn runs(&self) -> Result<String, ApiError> {
        let index = RunIndex::load(&self.root).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(to_body(&index.runs))
    }

    pub fn models(&self) -> String {
        to_body(&Family::ALL.iter().map(|f| f.name()).collect::<Vec<_>>())
    }

    /// Observed monthly values of a run, anchored to calendar months.
    pub fn series(&self, id: &str) -> Result<String, ApiError> {
        let s = self.observed(id)?;
        #[derive(Serialize)]
        struct Point {
            month: YearMonth,
            value: f64,
        }
        #[derive(Serialize)]
        struct Body<'a> {
            id: &'a str,
            start: YearMonth,
            end: YearMonth,
            points: Vec<Point>,
        }
        let points = s.months().zip(s.values()).map(|(month, &value)| Point { month, value }).collect();
        Ok(to_body(&Body {
            id,
            start: s.start(),
            end: s.end(),
            points,
        }))
    }

    /// The stored excess report of a run for `family` (default: the first
    /// family of the run that has one).
    pub fn excess(&self, run: &str, family: Option<&str>) -> Result<String, ApiError> {
        let dir = self.run_dir(run)?;
        let families: Vec<Family> = match family {
            Some(f) => vec![f.parse().map_err(|_| ApiError::invalid(format!("unknown model family {f:?}")))?],
            None => Family::ALL.to_vec(),
        };
        for f in families {
            if let Ok(text) = std::fs::read_to_string(dir.join("excess").join(format!("{f}.json"))) {
                let report: ExcessReport = serde_json::from_str(&text).map_err(|e| ApiError::internal(e.to_string()))?;
                return Ok(to_body(&report));
            }
        }
        Err(ApiError::not_found(format!("run {run} has no projection for that family")))
    }

    pub fn parse_request(body: &[u8]) -> Result<ApiProjectionRequest, ApiError> {
        serde_json::from_slice(body).map_err(|e| ApiError::invalid(e.to_string()))
    }

    /// Cache key. Run ids are content hashes, so the request alone pins
    /// every input.
    fn request_hash(&self, req: &ApiProjectionRequest) -> String {
        let canonical = serde_json::to_string(req).expect("requests serialize");
        sha256_hex(canonical.as_bytes())[..16].to_string()
    }

    /// Runs (or recalls) a projection. The flag reports a cache hit; hit and
    /// miss bodies are byte-identical.
    pub fn project(&self, req: &ApiProjectionRequest) -> Result<(Arc<String>, bool), ApiError> {
        self.project_with(req, None)
    }

    fn project_with(&self, req: &ApiProjectionRequest, job: Option<&Arc<Job>>) -> Result<(Arc<String>, bool), ApiError> {
        let key = self.request_hash(req);
        if let Some(hit) = self.cached(&key) {
            return Ok((hit, true));
        }
        let _turn = self.compute.lock().unwrap_or_else(|p| p.into_inner());
        // An identical request may have finished while this one waited.
        if let Some(hit) = self.cached(&key) {
            return Ok((hit, true));
        }
        let response = self.compute_projection(req, &key, job)?;
        let body = Arc::new(to_body(&response));
        self.cache.lock().expect("cache lock").insert(key, body.clone());
        Ok((body, false))
    }

    fn cached(&self, key: &str) -> Option<Arc<String>> {
        self.cache.lock().expect("cache lock").get(key).cloned()
    }

    /// Starts a projection in the background and returns the job ticket.
    pub fn submit(self: &Arc<Self>, req: ApiProjectionRequest) -> Result<String, ApiError> {
        self.check_request(&req)?;
        let id = self.request_hash(&req);
        let job = {
            let mut jobs = self.jobs.lock().expect("jobs lock");
            if let Some(j) = jobs.get(&id) {
                if !matches!(*j.state.lock().expect("job lock"), JobState::Failed(_)) {
                    return self.job(&id);
                }
            }
            let job = Arc::new(Job {
                state: Mutex::new(JobState::Pending),
                done: AtomicUsize::new(0),
                total: req.trials,
            });
            jobs.insert(id.clone(), job.clone());
            job
        };
        let api = Arc::clone(self);
        std::thread::spawn(move || {
            let outcome = api.project_with(&req, Some(&job));
            *job.state.lock().expect("job lock") = match outcome {
                Ok((body, _)) => JobState::Done(body),
                Err(e) => JobState::Failed(e),
            };
        });
        self.job(&id)
    }

    /// `{"id","state","done","total"}` plus `result` or `failure` once settled.
    pub fn job(&self, id: &str) -> Result<String, ApiError> {
        let job = self
            .jobs
            .lock()
            .expect("jobs lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no job {id}")))?;
        let state = job.state.lock().expect("job lock").clone();
        let (name, extra) = match &state {
            JobState::Pending => ("pending", String::new()),
            JobState::Done(body) => ("done", format!(",\"result\":{body}")),
            JobState::Failed(e) => ("failed", format!(",\"failure\":{}", e.body())),
        };
        let done = match state {
            JobState::Pending => job.done.load(Ordering::Relaxed),
            _ => job.total,
        };
        Ok(format!(
            "{{\"id\":{},\"state\":\"{name}\",\"done\":{done},\"total\":{}{extra}}}",
            serde_json::to_string(id).expect("string"),
            job.total
        ))
    }

    fn run_dir(&self, id: &str) -> Result<PathBuf, ApiError> {
        let index = RunIndex::load(&self.root).map_err(|e| ApiError::internal(e.to_string()))?;
        // Only ids listed in the index resolve, so no request can name an
        // arbitrary path.
        if index.runs.iter().any(|r| r.id == id) {
            Ok(self.root.join(id))
        } else {
            Err(ApiError::not_found(format!("unknown run {id:?}")))
        }
    }

    fn observed(&self, id: &str) -> Result<MonthlySeries, ApiError> {
        let path = self.run_dir(id)?.join("data/observed.csv");
        let text = std::fs::read_to_string(&path)
            .map_err(|_| ApiError::not_found(format!("run {id} has no observed series")))?;
        series_from_csv(&text).map_err(|e| ApiError::internal(e.to_string()))
    }

    fn check_request(&self, req: &ApiProjectionRequest) -> Result<(), ApiError> {
        if req.horizon == 0 {
            return Err(ApiError::invalid("horizon must be at least 1"));
        }
        if req.trials == 0 || req.trials > MAX_TRIALS {
            return Err(ApiError::invalid(format!("trials must lie in 1..={MAX_TRIALS}")));
        }
        let months = req.train_start.months_until(req.train_end) + 1;
        let need = (VALIDATION_MONTHS + MIN_TRAIN_MONTHS) as i64;
        if months < need {
            return Err(ApiError::invalid(format!(
                "training window {}..{} has {months} months, need at least {need}",
                req.train_start, req.train_end
            )));
        }
        let s = self.observed(&req.run)?;
        let last = req.train_end.add_months(req.horizon as i64);
        if req.train_start < s.start() || last > s.end() {
            return Err(ApiError::invalid(format!(
                "window {}..{} plus a {}-month horizon leaves the data coverage {}..{}",
                req.train_start,
                req.train_end,
                req.horizon,
                s.start(),
                s.end()
            )));
        }
        Ok(())
    }

    fn run_settings(&self, run: &str, family: Family) -> Result<(ModelConfig, ResidualSource), ApiError> {
        let dir = self.run_dir(run)?;
        let config = std::fs::read_to_string(dir.join("tuning/selected.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<HashMap<Family, ModelConfig>>(&t).ok())
            .and_then(|m| m.get(&family).copied())
            .unwrap_or_else(|| ModelConfig::default_for(family));
        let residuals = std::fs::read_to_string(dir.join("config.toml"))
            .ok()
            .and_then(|t| RunConfig::from_toml(&t, Path::new("/")).ok())
            .map(|c| c.residuals)
            .unwrap_or_default();
        Ok((config, residuals))
    }

    fn compute_projection(
        &self,
        req: &ApiProjectionRequest,
        key: &str,
        job: Option<&Arc<Job>>,
    ) -> Result<ApiProjectionResponse, ApiError> {
        self.check_request(req)?;
        let series = self.observed(&req.run)?;
        let (config, residuals) = self.run_settings(&req.run, req.family)?;
        let val_start = req.train_end.add_months(1 - VALIDATION_MONTHS as i64);
        let train = Period::new(req.train_start, val_start.add_months(-1));
        let validation = Period::new(val_start, req.train_end);
        let projection = Period::new(req.train_end.succ(), req.train_end.add_months(req.horizon as i64));
        let slice = |p: Period| series.slice(p.start, p.end).map_err(|e| ApiError::invalid(e.to_string()));
        let split = DatasetSplit {
            train: slice(train)?,
            validation: slice(validation)?,
            projection: Some(slice(projection)?),
        };
        let progress = job.map(|j| {
            let j = Arc::clone(j);
            Arc::new(move |d: usize, _total: usize| j.done.store(d, Ordering::Relaxed)) as excessmort::trials::Progress
        });
        let opts = TrialOptions { residuals, progress };
        let ensemble = with_workers(self.workers, || run_trials(&config, &split, req.trials, req.base_seed, &opts))
            .map_err(trials_error)?;
        let observed = split.projection.as_ref().expect("built above");
        let mean = ensemble.mean_projection().expect("successful trials carry projections");
        let metrics = MetricsReport::compute(observed.values(), &mean).map_err(|e| ApiError::internal(e.to_string()))?;
        let report = excess(observed, &mean).map_err(|e| ApiError::internal(e.to_string()))?;
        let cli_config = (req.horizon >= 12).then(|| {
            let dir = self.root.join(&req.run);
            RunConfig {
                data: DataSource::Csv {
                    path: dir.join("data/observed.csv"),
                },
                split: SplitSpec {
                    train,
                    validation,
                    projection: Some(projection),
                },
                families: vec![req.family],
                models: vec![config],
                trials: req.trials,
                base_seed: req.base_seed,
                residuals,
                horizons: vec![req.horizon],
                out: PathBuf::from("runs"),
                ..RunConfig::from_toml("[data]\nkind = \"synthetic\"\n", Path::new("/")).expect("minimal config parses")
            }
            .to_toml()
        });
        Ok(ApiProjectionResponse {
            request: req.clone(),
            months: (0..mean.len()).map(|i| mean.month_at(i)).collect(),
            observed: observed.values().to_vec(),
            points: mean.points.clone(),
            lower: mean.lower.clone(),
            upper: mean.upper.clone(),
            level: mean.level,
            metrics,
            excess: report,
            trials_ok: ensemble.trials.len(),
            census: ensemble.failures.clone(),
            provenance: Provenance {
                run_id: req.run.clone(),
                request_hash: key.to_string(),
                config,
                seeds: ensemble.seeds.clone(),
                residuals,
                train,
                validation,
                projection,
                version: env!("CARGO_PKG_VERSION"),
                cli_config,
            },
        })
    }
}

fn trials_error(e: TrialsError) -> ApiError {
    match e {
        TrialsError::Exhausted { census, .. } => ApiError {
            status: 422,
            error: "training_failed",
            message: "every trial failed".into(),
            census,
        },
        TrialsError::Precondition(m) => ApiError::invalid(m),
        other => ApiError::new(422, "training_failed", other.to_string()),
    }
}
