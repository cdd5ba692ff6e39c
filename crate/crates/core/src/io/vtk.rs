//! Legacy ASCII VTK snapshots.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::mesh::SimplicialMesh;

/// Writes `mesh` as an unstructured grid with one scalar point field per entry
/// of `fields`. 2d meshes get `z = 0`.
pub fn write_vtk_snapshot<const D: usize>(
    path: &Path,
    mesh: &SimplicialMesh<D>,
    fields: &[(&str, &[f64])],
) -> io::Result<()> {
    let n = mesh.num_vertices();
    if let Some((name, f)) = fields.iter().find(|(_, f)| f.len() != n) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("field {name} has {} values for {n} vertices", f.len()),
        ));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "phasefield snapshot")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {n} double")?;
    for p in mesh.vertices() {
        let z = if D == 3 { p[2] } else { 0.0 };
        writeln!(out, "{:?} {:?} {:?}", p[0], p[1], z)?;
    }
    let m = mesh.num_elements();
    writeln!(out, "CELLS {m} {}", m * (D + 2))?;
    for el in mesh.elements() {
        write!(out, "{}", D + 1)?;
        for v in el {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "CELL_TYPES {m}")?;
    let cell_type = if D == 2 { 5 } else { 10 };
    for _ in 0..m {
        writeln!(out, "{cell_type}")?;
    }
    writeln!(out, "POINT_DATA {n}")?;
    for (name, values) in fields {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in *values {
            writeln!(out, "{v:?}")?;
        }
    }
    out.flush()
}
