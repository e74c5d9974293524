//! Hop-distance receptive fields on an arbitrary graph, and the lattice
//! special case that reproduces image convolution footprints.

use structconv::graph::{bfs_distance, five_node_example, hop_mask, lattice_graph, Neighborhood};

fn print_mask(label: &str, mask: &structconv::HopMask) {
    println!("{label}");
    for i in 0..mask.f() {
        let row: Vec<&str> = mask.row(i).iter().map(|&b| if b { "1" } else { "." }).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() {
    let g = five_node_example();
    println!("5-node demo graph, adjacency:");
    for i in 0..g.f() {
        let row: Vec<String> = (0..g.f()).map(|j| format!("{}", g.at(i, j))).collect();
        println!("  {}", row.join(" "));
    }

    for k in 0..=2 {
        print_mask(&format!("\nhop-{k} mask:"), &hop_mask(&g, k));
    }

    let d = bfs_distance(&g, 2).unwrap();
    println!("\nBFS distances from node 2: {d:?}");

    // On an 8-neighborhood lattice the hop-1 mask of an interior node is the
    // familiar 3x3 image convolution footprint.
    let lattice = lattice_graph(3, 3, Neighborhood::Eight);
    let mask = hop_mask(&lattice, 1);
    println!("\n3x3 eight-neighborhood lattice, hop-1 row of the center node:");
    let center: Vec<usize> = (0..9).filter(|&j| mask.at(4, j)).collect();
    println!("  covers nodes {center:?} (all nine cells)");

    let cross = hop_mask(&lattice_graph(3, 3, Neighborhood::Four), 1);
    let on: Vec<usize> = (0..9).filter(|&j| cross.at(4, j)).collect();
    println!("4-neighborhood center row covers {on:?} (the von Neumann cross)");
}
