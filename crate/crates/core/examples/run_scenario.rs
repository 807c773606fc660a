use std::env;
use std::fs;

use sdrkms_core::sim::{run_scenario, validate_config};

fn main() {
    let path = env::args()
        .nth(1)
        .unwrap_or("crates/core/scenarios/netjoin.scn".into());
    let cfg = validate_config(&fs::read_to_string(&path).expect("read scenario"))
        .expect("valid scenario");
    let out = run_scenario(&cfg, cfg.seed.unwrap_or(0)).expect("run");
    print!("{}", out.log_text());
}
