//! Runs the default desk-scale lab in memory and prints the headline numbers.
//!
//! `cargo run --release -p relneurons --example desk_run [results.json]`

use relneurons::pipeline::{run_lab, LabConfig};

fn main() -> relneurons::Result<()> {
    let config = LabConfig::default();
    let start = std::time::Instant::now();
    let (lab, results) = run_lab(&config)?;
    if let Some(t) = &results.train {
        println!(
            "trained {} steps, det accuracy {:.3}",
            t.steps,
            t.det_accuracy.unwrap_or(0.0)
        );
    }
    println!("N = {}, k = {}", lab.n_neurons, lab.k);
    for row in &results.intra {
        println!(
            "{:18} base {:.2}  top-k {:.2}  random {:.2}",
            row.relation, row.baseline, row.top_k, row.random_mean
        );
    }
    for (rel, t) in &results.template_robustness {
        println!(
            "{rel:18} eva2 {:.2} -> {:.2}",
            t.eva2_unmasked, t.eva2_masked
        );
    }
    for curve in &results.sweeps {
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{}:{:.2}/{:.2}", p.k, p.acc_self, p.acc_others_mean))
            .collect();
        println!("{:18} {}", curve.relation, pts.join(" "));
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&results).expect("results serialize"),
        )
        .map_err(|e| relneurons::Error::io(&path, e))?;
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
