//! Serve a finished run through the request layer without opening a
//! socket: list runs, fetch the stored excess report and request an
//! on-demand projection twice (the second answer comes from the cache).

use excessmort::cli::{cmd_pipeline, RunConfig};
use excessmort_server::Api;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let cfg = RunConfig::from_toml(
        "families = [\"sarima\"]\ntrials = 1\nout = \"runs\"\n[data]\nkind = \"synthetic\"\nlevel_shift = { from = \"2020-01\", amount = 500.0 }\n",
        tmp.path(),
    )?;
    let run = cmd_pipeline(&cfg)?.run_id;
    let api = Api::new(&cfg.out, 1);
    println!("runs: {}", api.runs().map_err(|e| e.body())?);

    let excess: serde_json::Value = serde_json::from_str(&api.excess(&run, Some("sarima")).map_err(|e| e.body())?)?;
    println!("stored cumulative excess: {}", excess["cumulative"]);

    let request = Api::parse_request(
        format!(r#"{{"run":"{run}","family":"sarima","train_start":"2015-01","train_end":"2019-12","horizon":24}}"#).as_bytes(),
    )
    .map_err(|e| e.body())?;
    for _ in 0..2 {
        let (body, hit) = api.project(&request).map_err(|e| e.body())?;
        let v: serde_json::Value = serde_json::from_str(&body)?;
        println!("cache hit {hit}: 24-month cumulative excess {}", v["excess"]["cumulative"]);
    }
    Ok(())
}
