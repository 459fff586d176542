//! Parse a tab-delimited mortality export, fill suppressed cells and
//! aggregate to a national monthly series.

use excessmort::ingest::{parse_wonder_export, resolve_suppression, to_series, SuppressionMode, SuppressionPolicy};

const EXPORT: &str = "\"Notes\"\t\"Month\"\t\"Month Code\"\t\"Sex\"\t\"Deaths\"
\t\"Jan., 2019\"\t\"2019/01\"\t\"Female\"\t1410
\t\"Jan., 2019\"\t\"2019/01\"\t\"Male\"\t3122
\t\"Feb., 2019\"\t\"2019/02\"\t\"Female\"\tSuppressed
\t\"Feb., 2019\"\t\"2019/02\"\t\"Male\"\t2987
\t\"Mar., 2019\"\t\"2019/03\"\t\"Female\"\t1502
\t\"Mar., 2019\"\t\"2019/03\"\t\"Male\"\t3240
\"Total\"\t\t\t\t14261
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let parsed = parse_wonder_export(EXPORT, &["Sex".to_string()])?;
    println!("{} records, {} suppressed", parsed.records.len(), parsed.suppressed_cells());

    // Failing on suppression is the default; midpoint substitution is opt-in.
    let strict = resolve_suppression(&parsed, SuppressionPolicy::default());
    println!("fail policy: {}", strict.unwrap_err());

    let filled = resolve_suppression(&parsed, SuppressionPolicy { mode: SuppressionMode::Midpoint })?;
    let national = to_series(&filled, None)?;
    for (month, deaths) in national.months().zip(national.values()) {
        println!("{month}  {deaths:>6}");
    }
    Ok(())
}
