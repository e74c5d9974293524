//! Recurrence matrices: time pairs whose activation vectors lie within an
//! epsilon ball. A periodic signal yields diagonal banding at its period.

use structconv::analysis::{export_heatmap, recurrence, HeatmapFormat};

fn main() {
    let out = std::path::Path::new("example_out/recurrence_plot");
    std::fs::create_dir_all(out).expect("create output dir");

    // A quasi-periodic two-channel signal with period 12 plus a slow drift.
    let period = 12usize;
    let n = 60usize;
    let seq: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let phase = std::f64::consts::TAU * (t % period) as f64 / period as f64;
            vec![phase.sin(), phase.cos(), 1e-6 * t as f64]
        })
        .collect();

    let r = recurrence(&seq, 1e-4).unwrap();
    println!("recurrence at epsilon 1e-4 ({} x {}):", r.n(), r.n());
    for i in 0..n {
        let row: String = (0..n).map(|j| if r.at(i, j) { '#' } else { '.' }).collect();
        println!("  {row}");
    }
    println!("\ndiagonal bands every {period} steps mark the recurrence structure");

    let path = out.join("recurrence.pgm");
    export_heatmap(&r.to_f64(), r.n(), r.n(), &path, HeatmapFormat::Pgm).unwrap();
    println!("wrote {}", path.display());
}
