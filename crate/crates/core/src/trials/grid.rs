use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_trials, Summary, TrialEnsemble, TrialOptions, TrialsError};
use crate::forecasters::config::{BATCH_SIZES, D_MODEL, EPOCHS, HEADS, HIDDEN_SIZES, LOOKBACKS};
use crate::forecasters::{Family, ModelConfig};
use crate::series::{DatasetSplit, TuningSplit};

/// Candidate values for the neural families. The schedule lists always
/// apply; an architecture list left as `None` pins that dimension to the
/// family's default selection, so the default grid is the 36-cell
/// lookback x batch x epochs schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DlGrid {
    pub lookbacks: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder_hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<Vec<usize>>,
}

impl Default for DlGrid {
    fn default() -> Self {
        Self {
            lookbacks: LOOKBACKS.to_vec(),
            batch_sizes: BATCH_SIZES.to_vec(),
            epochs: EPOCHS.to_vec(),
            hidden: None,
            encoder_hidden: None,
            decoder_hidden: None,
            heads: None,
        }
    }
}

impl DlGrid {
    /// Schedule plus every architecture dimension.
    pub fn full() -> Self {
        Self {
            hidden: Some(HIDDEN_SIZES.to_vec()),
            encoder_hidden: Some(HIDDEN_SIZES.to_vec()),
            decoder_hidden: Some(HIDDEN_SIZES.to_vec()),
            heads: Some(HEADS.to_vec()),
            ..Self::default()
        }
    }

    /// A grid holding exactly `config`.
    pub fn single(config: &ModelConfig) -> Self {
        let (l, b, e) = config.schedule().unwrap_or((0, 0, 0));
        let mut g = Self {
            lookbacks: vec![l],
            batch_sizes: vec![b],
            epochs: vec![e],
            ..Self::default()
        };
        match *config {
            ModelConfig::Lstm { hidden, .. } => g.hidden = Some(vec![hidden]),
            ModelConfig::Seq2seq {
                encoder_hidden,
                decoder_hidden,
                ..
            }
            | ModelConfig::Seq2seqAttn {
                encoder_hidden,
                decoder_hidden,
                ..
            } => {
                g.encoder_hidden = Some(vec![encoder_hidden]);
                g.decoder_hidden = Some(vec![decoder_hidden]);
            }
            ModelConfig::Transformer { heads, .. } => g.heads = Some(vec![heads]),
            ModelConfig::Sarima { .. } => {}
        }
        g
    }

    /// Every configuration of `family`, sorted by the tie-break order.
    pub fn configs(&self, family: Family) -> Result<Vec<ModelConfig>, TrialsError> {
        let pick = |v: &Option<Vec<usize>>, default: usize| v.clone().unwrap_or_else(|| vec![default]);
        let defaults = ModelConfig::default_for(family);
        let mut out = Vec::new();
        for &lookback in &self.lookbacks {
            for &batch_size in &self.batch_sizes {
                for &epochs in &self.epochs {
                    match defaults {
                        ModelConfig::Sarima { .. } => {
                            return Err(TrialsError::Precondition(
                                "SARIMA is tuned by the order grid search, not the neural grid".into(),
                            ))
                        }
                        ModelConfig::Lstm { hidden, .. } => {
                            for hidden in pick(&self.hidden, hidden) {
                                out.push(ModelConfig::Lstm {
                                    lookback,
                                    batch_size,
                                    epochs,
                                    hidden,
                                });
                            }
                        }
                        ModelConfig::Seq2seq {
                            encoder_hidden: enc,
                            decoder_hidden: dec,
                            ..
                        }
                        | ModelConfig::Seq2seqAttn {
                            encoder_hidden: enc,
                            decoder_hidden: dec,
                            ..
                        } => {
                            for encoder_hidden in pick(&self.encoder_hidden, enc) {
                                for decoder_hidden in pick(&self.decoder_hidden, dec) {
                                    out.push(if family == Family::Seq2seq {
                                        ModelConfig::Seq2seq {
                                            lookback,
                                            batch_size,
                                            epochs,
                                            encoder_hidden,
                                            decoder_hidden,
                                        }
                                    } else {
                                        ModelConfig::Seq2seqAttn {
                                            lookback,
                                            batch_size,
                                            epochs,
                                            encoder_hidden,
                                            decoder_hidden,
                                        }
                                    });
                                }
                            }
                        }
                        ModelConfig::Transformer { heads, .. } => {
                            for heads in pick(&self.heads, heads) {
                                out.push(ModelConfig::Transformer {
                                    lookback,
                                    batch_size,
                                    epochs,
                                    d_model: D_MODEL,
                                    heads,
                                });
                            }
                        }
                    }
                }
            }
        }
        out.sort_by_key(tie_key);
        out.dedup();
        if out.is_empty() {
            return Err(TrialsError::Precondition(format!("the {family} grid is empty")));
        }
        for c in &out {
            c.validate()?;
        }
        Ok(out)
    }
}

/// Ties on mean validation RMSE go to the smaller lookback, then batch
/// size, then epochs, then architecture dimensions.
fn tie_key(c: &ModelConfig) -> (usize, usize, usize, Vec<usize>) {
    let (l, b, e) = c.schedule().unwrap_or((0, 0, 0));
    let dims = match *c {
        ModelConfig::Lstm { hidden, .. } => vec![hidden],
        ModelConfig::Seq2seq {
            encoder_hidden,
            decoder_hidden,
            ..
        }
        | ModelConfig::Seq2seqAttn {
            encoder_hidden,
            decoder_hidden,
            ..
        } => vec![encoder_hidden, decoder_hidden],
        ModelConfig::Transformer { d_model, heads, .. } => vec![d_model, heads],
        ModelConfig::Sarima { .. } => vec![],
    };
    (l, b, e, dims)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlLeaderboardEntry {
    pub config: ModelConfig,
    /// Validation RMSE over successful trials; `None` when all failed.
    pub val_rmse: Option<Summary>,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlSearch {
    pub family: Family,
    pub best: ModelConfig,
    pub best_ensemble: TrialEnsemble,
    /// Successful configurations ranked, then failed ones in grid order.
    pub leaderboard: Vec<DlLeaderboardEntry>,
}

impl DlSearch {
    /// `rank,family,lookback,batch_size,epochs,hidden,encoder_hidden,decoder_hidden,heads,val_rmse_mean,val_rmse_sd,trials_ok,trials_failed`.
    pub fn leaderboard_csv(&self) -> String {
        let mut out = String::from(
            "rank,family,lookback,batch_size,epochs,hidden,encoder_hidden,decoder_hidden,heads,val_rmse_mean,val_rmse_sd,trials_ok,trials_failed\n",
        );
        for (i, e) in self.leaderboard.iter().enumerate() {
            let (l, b, ep) = e.config.schedule().unwrap_or((0, 0, 0));
            let (h, enc, dec, heads) = match e.config {
                ModelConfig::Lstm { hidden, .. } => (hidden.to_string(), String::new(), String::new(), String::new()),
                ModelConfig::Seq2seq {
                    encoder_hidden,
                    decoder_hidden,
                    ..
                }
                | ModelConfig::Seq2seqAttn {
                    encoder_hidden,
                    decoder_hidden,
                    ..
                } => (String::new(), encoder_hidden.to_string(), decoder_hidden.to_string(), String::new()),
                ModelConfig::Transformer { heads, .. } => (String::new(), String::new(), String::new(), heads.to_string()),
                ModelConfig::Sarima { .. } => Default::default(),
            };
            let (mean, sd) = match e.val_rmse {
                Some(s) => (format!("{:.6}", s.mean), format!("{:.6}", s.sd)),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{l},{b},{ep},{h},{enc},{dec},{heads},{mean},{sd},{},{}\n",
                i + 1,
                e.config.family(),
                e.trials_ok,
                e.trials_failed
            ));
        }
        out
    }
}

/// Runs `trials_per_config` trials of every grid cell on the tuning split
/// and ranks cells by mean validation RMSE. The split type carries no
/// projection segment, so nothing here can read it.
pub fn grid_search_dl(
    family: Family,
    grid: &DlGrid,
    split: &TuningSplit,
    trials_per_config: usize,
    base_seed: u64,
    opts: &TrialOptions,
) -> Result<DlSearch, TrialsError> {
    let configs = grid.configs(family)?;
    let data = DatasetSplit::from_tuning(split.clone());
    let inner = TrialOptions {
        residuals: opts.residuals,
        progress: None,
    };
    let done = AtomicUsize::new(0);
    let total = configs.len();
    let results: Vec<Result<TrialEnsemble, TrialsError>> = configs
        .par_iter()
        .map(|c| {
            let r = run_trials(c, &data, trials_per_config, base_seed, &inner);
            let d = done.fetch_add(1, AtomicOrdering::Relaxed) + 1;
            if let Some(p) = &opts.progress {
                p(d, total);
            }
            r
        })
        .collect();

    let mut ranked: Vec<TrialEnsemble> = Vec::new();
    let mut failed: Vec<DlLeaderboardEntry> = Vec::new();
    for (config, r) in configs.iter().zip(results) {
        match r {
            Ok(e) => ranked.push(e),
            Err(TrialsError::Exhausted { census, .. }) => failed.push(DlLeaderboardEntry {
                config: *config,
                val_rmse: None,
                trials_ok: 0,
                trials_failed: census.len(),
            }),
            Err(other) => return Err(other),
        }
    }
    ranked.sort_by(|a, b| {
        a.validation
            .rmse
            .mean
            .total_cmp(&b.validation.rmse.mean)
            .then_with(|| tie_key(&a.config).cmp(&tie_key(&b.config)))
    });
    let mut leaderboard: Vec<DlLeaderboardEntry> = ranked
        .iter()
        .map(|e| DlLeaderboardEntry {
            config: e.config,
            val_rmse: Some(e.validation.rmse),
            trials_ok: e.trials.len(),
            trials_failed: e.failures.len(),
        })
        .collect();
    leaderboard.extend(failed);
    let best_ensemble = ranked
        .into_iter()
        .next()
        .ok_or(TrialsError::GridExhausted { tried: total })?;
    Ok(DlSearch {
        family,
        best: best_ensemble.config,
        best_ensemble,
        leaderboard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, SyntheticSpec};
    use crate::series::{split, SplitSpec};

    fn tuning() -> TuningSplit {
        let s = generate_synthetic(&SyntheticSpec::national_like(60), 21).unwrap();
        split(&s, &SplitSpec::national_main().masked()).unwrap().tuning()
    }

    #[test]
    fn default_grid_sizes() {
        for f in Family::ALL.into_iter().filter(Family::is_neural) {
            assert_eq!(DlGrid::default().configs(f).unwrap().len(), 36, "{f}");
        }
        assert_eq!(DlGrid::full().configs(Family::Lstm).unwrap().len(), 72);
        assert_eq!(DlGrid::full().configs(Family::Seq2seqAttn).unwrap().len(), 144);
        assert_eq!(DlGrid::full().configs(Family::Transformer).unwrap().len(), 72);
        assert!(DlGrid::default().configs(Family::Sarima).is_err());
        let lstm = DlGrid::default().configs(Family::Lstm).unwrap();
        assert!(lstm.contains(&ModelConfig::default_for(Family::Lstm)));
        assert_eq!(lstm[0].schedule(), Some((3, 8, 50)));
    }

    #[test]
    fn off_grid_values_are_rejected() {
        let g = DlGrid {
            lookbacks: vec![4],
            ..DlGrid::default()
        };
        assert!(g.configs(Family::Lstm).is_err());
    }

    #[test]
    fn single_cell_grid_wins_trivially() {
        let c = ModelConfig::Lstm {
            lookback: 3,
            batch_size: 32,
            epochs: 50,
            hidden: 64,
        };
        let r = grid_search_dl(Family::Lstm, &DlGrid::single(&c), &tuning(), 2, 42, &TrialOptions::default()).unwrap();
        assert_eq!(r.best, c);
        assert_eq!(r.leaderboard.len(), 1);
        assert!(r.leaderboard_csv().starts_with("rank,family,lookback"));
    }

    #[test]
    fn ranking_is_by_mean_rmse_and_deterministic() {
        let g = DlGrid {
            lookbacks: vec![3, 12],
            batch_sizes: vec![32],
            epochs: vec![50],
            ..DlGrid::default()
        };
        let a = grid_search_dl(Family::Lstm, &g, &tuning(), 2, 42, &TrialOptions::default()).unwrap();
        let b = super::super::with_workers(1, || {
            grid_search_dl(Family::Lstm, &g, &tuning(), 2, 42, &TrialOptions::default()).unwrap()
        });
        assert_eq!(a.leaderboard, b.leaderboard);
        let means: Vec<f64> = a.leaderboard.iter().map(|e| e.val_rmse.unwrap().mean).collect();
        assert!(means[0] <= means[1]);
        assert_eq!(a.best, a.leaderboard[0].config);
    }

    #[test]
    fn ties_prefer_smaller_schedules() {
        let mut cs = DlGrid::default().configs(Family::Transformer).unwrap();
        cs.reverse();
        cs.sort_by_key(tie_key);
        assert_eq!(cs[0].schedule(), Some((3, 8, 50)));
        assert_eq!(cs.last().unwrap().schedule(), Some((12, 32, 100)));
    }
}
