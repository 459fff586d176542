use crate::forecasters::{Family, ModelConfig};
use crate::trials::Aggregate;

/// Name used in the report tables.
pub fn display_name(f: Family) -> &'static str {
    match f {
        Family::Sarima => "SARIMA",
        Family::Lstm => "LSTM",
        Family::Seq2seq => "Seq2Seq",
        Family::Seq2seqAttn => "Seq2Seq w/ Attn.",
        Family::Transformer => "Transformer",
    }
}

/// Aggregated metrics of one family over one stage of the protocol.
#[derive(Debug, Clone, Copy)]
pub struct StageRow<'a> {
    pub family: Family,
    /// `train`, `validation`, `final_train` or `projection`.
    pub stage: &'a str,
    /// Calendar span, e.g. `2015-01..2018-12`.
    pub period: &'a str,
    pub agg: &'a Aggregate,
}

/// `model,stage,period,trials,rmse_mean,rmse_sd,mae_mean,mae_sd,mape_mean,mape_sd,pi_coverage_mean,pi_coverage_sd`.
pub fn metrics_csv(rows: &[StageRow<'_>]) -> String {
    let mut out = String::from(
        "model,stage,period,trials,rmse_mean,rmse_sd,mae_mean,mae_sd,mape_mean,mape_sd,pi_coverage_mean,pi_coverage_sd\n",
    );
    for r in rows {
        let a = r.agg;
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.family,
            r.stage,
            r.period,
            a.n(),
            a.rmse.mean,
            a.rmse.sd,
            a.mae.mean,
            a.mae.sd,
            a.mape.mean,
            a.mape.sd,
            a.pi_coverage.mean,
            a.pi_coverage.sd
        ));
    }
    out
}

/// Two stages side by side, one row per family: mean and sd of RMSE, MAE
/// and MAPE plus mean PI coverage for each stage.
pub fn stage_table(first: &str, second: &str, rows: &[(Family, &Aggregate, &Aggregate)]) -> String {
    let mut header = vec!["Model".to_string()];
    for stage in [first, second] {
        for col in ["RMSE", "RMSE sd", "MAE", "MAE sd", "MAPE", "MAPE sd", "PI Cov."] {
            header.push(format!("{stage} {col}"));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for (family, a, b) in rows {
        out.push_str(&quote(display_name(*family)));
        for s in [a, b] {
            out.push_str(&format!(
                ",{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                s.rmse.mean, s.rmse.sd, s.mae.mean, s.mae.sd, s.mape.mean, s.mape.sd, s.pi_coverage.mean
            ));
        }
        out.push('\n');
    }
    out
}

/// Selected hyperparameters: `Model,Lookback,Batch Size,Epochs,Notes`.
pub fn table1_csv(selected: &[ModelConfig]) -> String {
    let mut out = String::from("Model,Lookback,Batch Size,Epochs,Notes\n");
    for c in selected {
        let (l, b, e) = c
            .schedule()
            .map(|(l, b, e)| (l.to_string(), b.to_string(), e.to_string()))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{l},{b},{e},{}\n",
            quote(display_name(c.family())),
            quote(&notes(c))
        ));
    }
    out
}

fn notes(c: &ModelConfig) -> String {
    match *c {
        ModelConfig::Sarima { order } => format!("{order}"),
        ModelConfig::Lstm { hidden, .. } => format!("2-layer LSTM, hidden {hidden}, ReLU output"),
        ModelConfig::Seq2seq {
            encoder_hidden,
            decoder_hidden,
            ..
        } => format!("GRU {encoder_hidden} encoder - {decoder_hidden} decoder without attention"),
        ModelConfig::Seq2seqAttn {
            encoder_hidden,
            decoder_hidden,
            ..
        } => format!("GRU {encoder_hidden} encoder - {decoder_hidden} decoder with Bahdanau attention"),
        ModelConfig::Transformer { d_model, heads, .. } => {
            format!("d={d_model}, {heads}-head self-attention, positional encodings")
        }
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
