//! Layer tables, parameter counts and FLOPs for the default ensemble and the student.

use seizure_forge::models::{Ensemble, EnsembleConfig, Network, Student, StudentConfig};

fn main() -> seizure_forge::Result<()> {
    let ensemble = Ensemble::new(&EnsembleConfig::default())?;
    let summaries = ensemble.describe()?;
    for s in &summaries {
        println!("{}: input {:?}, final features {:?}, {} params, {:.1} MFLOPs", s.name, s.input, s.final_features, s.params, s.flops() as f64 / 1e6);
    }
    let total: usize = summaries.iter().map(|s| s.params).sum();
    println!("ensemble total: {total} parameters");

    let student = Student::new(StudentConfig::default(), "student.")?.describe()?;
    println!("{student}");
    println!("compression: {:.1}x fewer parameters", total as f64 / student.params as f64);
    Ok(())
}
