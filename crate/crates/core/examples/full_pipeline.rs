//! Runs the full experiment with default settings and prints a summary.

use dsmcts::pipeline::{final_match, prepare, PipelineConfig};

fn main() -> dsmcts::Result<()> {
    let cfg = PipelineConfig::default();
    let dir = std::path::PathBuf::from(std::env::var("DSMCTS_CACHE").unwrap_or_else(|_| "target/dsmcts-cache".into()));
    let out = prepare(&cfg, Some(&dir))?;
    println!("n* = {}", out.checkpoint.n_star);
    println!("balance = {:?}", out.balance);
    println!("ds config:\n{}", out.ds_config);
    println!("thresholds = {:?}", out.thresholds);
    let m = final_match(&cfg, &out, Some(&dir))?;
    println!(
        "winrate {:.4} [{:.4}, {:.4}] ds avg sims {:.1} pv avg sims {:.1}",
        m.winrate, m.wilson_low, m.wilson_high, m.a_avg_sims(), m.b_avg_sims()
    );
    Ok(())
}
