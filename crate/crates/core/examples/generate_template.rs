//! Regenerates the bundled elimination template.
//!
//! `cargo run --release -p rsrp-core --example generate_template [out]`

use rsrp_core::minimal::generator::{generate_template, DEFAULT_MAX_DEGREE, DEFAULT_PROBE_SEED};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "crates/core/data/grsrp_template.txt".into());
    let start = std::time::Instant::now();
    let template = generate_template(DEFAULT_PROBE_SEED, DEFAULT_MAX_DEGREE).unwrap_or_else(|e| {
        eprintln!("generation failed: {e}");
        std::process::exit(1);
    });
    std::fs::write(&out, template.to_text()).expect("write template");
    eprintln!(
        "{} x {} template, order {:?}, action variable {} ({:.1?})",
        template.n_rows(),
        template.n_cols(),
        template.variable_order,
        template.action_variable,
        start.elapsed()
    );
}
