//! 10-fold cross-validation on a TU dataset.
//!
//! `cargo run --release --example cv -- data MUTAG [onehot|embedding]`

use gcbm::config::RunConfig;
use gcbm::graph::parse_tu_dataset;
use gcbm::pipeline::cross_validate_dataset;

fn main() -> gcbm::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let root = args.get(1).map_or("data", |s| s.as_str());
    let name = args.get(2).map_or("MUTAG", |s| s.as_str());
    let mut config: RunConfig = match std::env::var("GCBM_CONFIG") {
        Ok(json) => serde_json::from_str(&json)?,
        Err(_) => RunConfig::default(),
    };
    if let Some(mode) = args.get(3) {
        config.embedder = mode.parse()?;
    }
    let dataset = parse_tu_dataset(format!("{root}/{name}"), name)?;
    let start = std::time::Instant::now();
    let cv = cross_validate_dataset::<f64>(&dataset, &config)?;
    if std::env::var("GCBM_TRACE").is_ok() {
        for r in cv.folds[0].history.iter().step_by(10) {
            println!(
                "epoch {:>3} concept {:.4} ce {:.4} l1 {:.2} val {:?} lr {:.1e} grad {:.3}",
                r.epoch,
                r.train.concept,
                r.train.classification,
                r.train.sparsity,
                r.validation,
                r.learning_rate,
                r.grad_norm
            );
        }
    }
    print!("{}", cv.report.to_table());
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
