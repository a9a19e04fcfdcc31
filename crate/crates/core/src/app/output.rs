//! On-disk artifacts: the energy trace as CSV and field snapshots as legacy VTK.

use std::fmt::Write as _;
use std::path::Path;

use crate::fem::{EnergyBreakdown, NodalField};
use crate::mesh::Mesh;
use crate::schemes::{BalanceRow, TraceRow};

pub const ENERGY_CSV_HEADER: &str =
    "step,time,energy_exchange,energy_internal,energy_anisotropy,energy_total,l2_norm,linf_norm,fp_iterations";

/// Reals at 17 significant digits, which round-trips every `f64`.
fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn energy_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(ENERGY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let e = &r.energy;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            real(r.time),
            real(e.exchange),
            real(e.internal),
            real(e.anisotropy),
            real(e.total),
            real(r.l2_norm),
            real(r.linf_norm),
            r.fp_iterations
        );
    }
    out
}

pub fn write_energy_csv(rows: &[TraceRow], path: &Path) -> std::io::Result<()> {
    std::fs::write(path, energy_csv(rows))
}

/// Reads back a file written by [`energy_csv`]. The `L⁴` norm is not stored and
/// comes back as NaN.
pub fn parse_energy_csv(text: &str) -> Result<Vec<TraceRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == ENERGY_CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 2;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 9 {
                return Err(format!("line {line_no}: expected 9 fields, found {}", cells.len()));
            }
            let f = |j: usize| {
                cells[j]
                    .parse::<f64>()
                    .map_err(|e| format!("line {line_no}, field {}: {e}", j + 1))
            };
            let u = |j: usize| {
                cells[j]
                    .parse::<usize>()
                    .map_err(|e| format!("line {line_no}, field {}: {e}", j + 1))
            };
            Ok(TraceRow {
                step: u(0)?,
                time: f(1)?,
                energy: EnergyBreakdown {
                    exchange: f(2)?,
                    internal: f(3)?,
                    anisotropy: f(4)?,
                    total: f(5)?,
                },
                l2_norm: f(6)?,
                linf_norm: f(7)?,
                l4_norm: f64::NAN,
                fp_iterations: u(8)?,
            })
        })
        .collect()
}

pub const BALANCE_CSV_HEADER: &str = "step,time,delta_energy,dissipation,current_work,torque_work,residual";

pub fn balance_csv(rows: &[BalanceRow]) -> String {
    let mut out = String::from(BALANCE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            real(r.time),
            real(r.delta_energy),
            real(r.dissipation),
            real(r.current_work),
            real(r.torque_work),
            real(r.residual)
        );
    }
    out
}

/// Legacy ASCII unstructured grid with the field as point vectors named
/// `magnetisation`. Numbers use the shortest round-trip form.
pub fn vtk_snapshot(mesh: &Mesh, field: &NodalField) -> String {
    assert_eq!(field.len(), mesh.num_vertices(), "field lives on a different mesh");
    let (nv, nt) = (mesh.num_vertices(), mesh.num_triangles());
    let mut out = String::with_capacity(64 * nv + 32 * nt);
    out.push_str("# vtk DataFile Version 3.0\nmagnetisation\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {nv} double");
    for p in mesh.vertices() {
        let _ = writeln!(out, "{} {} 0", p[0], p[1]);
    }
    let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {nv}\nVECTORS magnetisation double");
    for v in field.values() {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    out
}

pub fn write_vtk_snapshot(mesh: &Mesh, field: &NodalField, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, vtk_snapshot(mesh, field))
}

/// `snapshot_<time>.vtk` with the time in shortest exponent form.
pub fn snapshot_file_name(time: f64) -> String {
    format!("snapshot_{time:e}.vtk")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Bounds;

    #[test]
    fn snapshot_names() {
        assert_eq!(snapshot_file_name(1e-5), "snapshot_1e-5.vtk");
        assert_eq!(snapshot_file_name(0.0), "snapshot_0e0.vtk");
    }

    #[test]
    fn vtk_counts_on_single_square() {
        let mesh = Mesh::build_structured(1, Bounds::centred_unit_square()).unwrap();
        let text = vtk_snapshot(&mesh, &NodalField::constant(4, [0.0, 0.0, 1.0]));
        assert!(text.contains("POINTS 4 double\n"));
        assert!(text.contains("CELLS 2 8\n"));
        let vectors = text.split("VECTORS magnetisation double\n").nth(1).unwrap();
        assert_eq!(vectors, "0 0 1\n".repeat(4));
    }
}
