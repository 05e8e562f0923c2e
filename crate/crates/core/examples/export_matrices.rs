//! Writes the assembled block operator and the norm Gram matrices in
//! Matrix Market format for inspection in external tools.
//!
//! Usage: `cargo run --release --example export_matrices -- [n] [output_dir]`

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;

use biot_hdiv::assembly::{DgConfig, Spaces, assemble_block_system};
use biot_hdiv::elements::Triple;
use biot_hdiv::mesh::TriMesh;
use biot_hdiv::params::ReducedParams;
use biot_hdiv::sparse::{max_asymmetry, write_matrix_market};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(4);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "out/matrices".into()));
    fs::create_dir_all(&dir)?;

    let spaces = Spaces::new(Arc::new(TriMesh::structured(n)), Triple::STABLE)?;
    let system = assemble_block_system(&spaces, ReducedParams::new(1e4, 1e-4, 1.0)?, DgConfig::default())?;
    let a = system.matrix();
    let norms = system.norms();
    for (name, m) in [("matrix", &a), ("norm_u", &norms.n_u), ("norm_v", &norms.n_v), ("norm_p", &norms.n_p)] {
        let path = dir.join(format!("{name}.mtx"));
        write_matrix_market(m, BufWriter::new(File::create(&path)?))?;
        println!("{}: {}x{}, {} nonzeros", path.display(), m.nrows(), m.ncols(), m.nnz());
    }
    println!("max |A - A^T| = {:e}", max_asymmetry(&a));
    Ok(())
}
