//! CSV and legacy-VTK writers. Floats use Rust's shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::convergence::{with_rates, RateRow};
use crate::diagnostics::EnergyRecord;
use crate::stepper::State;
use crate::{Error, Result};

pub const ENERGY_HEADER: &str = "step,t,E,mass_phi,mass_c,dissipation,mu_mean,mu_w16_5";
pub const RATE_HEADER: &str = "resolution,err_phi_H1,rate_phi,err_c,rate_c,err_mu_H1,rate_mu";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn energy_csv(records: &[EnergyRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(ENERGY_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.step_index, r.t, r.energy, r.mass_phi, r.mass_c, r.dissipation, r.mu_mean, r.mu_w16_5
        );
    }
    s
}

/// One row per record, after the header.
pub fn write_energy_csv(records: &[EnergyRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Argument("no energy records to write".into()));
    }
    write(path, &energy_csv(records))
}

/// Rows sorted by resolution; rates recomputed from the errors.
pub fn rate_csv(rows: &[RateRow]) -> String {
    let rows = with_rates(rows.to_vec());
    let cell = |r: Option<f64>| r.map(|v| format!("{v:?}")).unwrap_or_default();
    let mut s = String::new();
    s.push_str(RATE_HEADER);
    s.push('\n');
    for r in &rows {
        let _ = writeln!(
            s,
            "{:?},{:?},{},{:?},{},{:?},{}",
            r.resolution,
            r.err_phi_h1,
            cell(r.rate_phi),
            r.err_c,
            cell(r.rate_c),
            r.err_mu_h1,
            cell(r.rate_mu)
        );
    }
    s
}

pub fn write_rate_csv(rows: &[RateRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Argument("no rate rows to write".into()));
    }
    write(path, &rate_csv(rows))
}

/// Legacy ASCII VTK structured grid with point arrays `phi`, `c`, `mu`.
pub fn field_vtk(state: &State) -> String {
    let mesh = state.mesh();
    let n = mesh.node_count();
    let mut s = String::with_capacity(96 * n);
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "chcross step {} t {:?}", state.step_index, state.t);
    s.push_str("ASCII\nDATASET STRUCTURED_GRID\n");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", mesh.nx() + 1, mesh.ny() + 1);
    let _ = writeln!(s, "POINTS {n} double");
    for p in mesh.nodes() {
        let _ = writeln!(s, "{:?} {:?} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    for (name, field) in [("phi", &state.phi), ("c", &state.c), ("mu", &state.mu)] {
        let _ = writeln!(s, "SCALARS {name} double 1");
        s.push_str("LOOKUP_TABLE default\n");
        for v in field.values() {
            let _ = writeln!(s, "{v:?}");
        }
    }
    s
}

pub fn write_field_vtk(state: &State, path: &Path) -> Result<()> {
    write(path, &field_vtk(state))
}
