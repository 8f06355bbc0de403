//! Temporal and spatial refinement studies against self-generated reference
//! solutions, observed orders and time-aggregated error norms.

use std::fmt;
use std::sync::Arc;

use crate::fem::{grad_lp_norm, h1_norm, lp_norm};
use crate::mesh::{interpolate_nodal, transfer_to_mesh, Mesh, NodalFunction, Rect};
use crate::potential::Potential;
use crate::stepper::{step_count, SchemeParams, State, Stepper};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyMode {
    /// Sweep time steps on the reference mesh.
    Temporal,
    /// Sweep meshes at the reference time step.
    Spatial,
}

/// Initial fields `(phi_0, c_0)` as functions of position.
#[derive(Clone)]
pub enum InitialCondition {
    /// `phi_0 = 0.05 cos x cos y + 0.3`, `c_0 = 0.05 cos 2x cos 2y + 0.5`.
    Exp1,
    Constant { phi: f64, c: f64 },
    Custom(Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>),
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Exp1 => f.write_str("Exp1"),
            InitialCondition::Constant { phi, c } => write!(f, "Constant {{ phi: {phi}, c: {c} }}"),
            InitialCondition::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl InitialCondition {
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            InitialCondition::Exp1 => (
                0.05 * x.cos() * y.cos() + 0.3,
                0.05 * (2.0 * x).cos() * (2.0 * y).cos() + 0.5,
            ),
            InitialCondition::Constant { phi, c } => (*phi, *c),
            InitialCondition::Custom(f) => f(x, y),
        }
    }

    /// Nodal interpolants on `mesh`.
    pub fn fields(&self, mesh: &Arc<Mesh>) -> Result<(NodalFunction, NodalFunction)> {
        let phi = interpolate_nodal(mesh, |x, y| self.eval(x, y).0)?;
        let c = interpolate_nodal(mesh, |x, y| self.eval(x, y).1)?;
        Ok((phi, c))
    }
}

/// A refinement study. Temporal mode runs every `taus` entry on the
/// `reference_cells` mesh; spatial mode runs every `cells` entry at
/// `reference_tau`.
#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub mode: StudyMode,
    pub domain: Rect,
    pub eps: f64,
    pub stabilization: f64,
    pub mobility: f64,
    pub potential: Potential,
    pub final_time: f64,
    pub initial: InitialCondition,
    pub reference_tau: f64,
    /// Cells per side of the reference mesh.
    pub reference_cells: usize,
    pub taus: Vec<f64>,
    pub cells: Vec<usize>,
}

fn periodic_box() -> Rect {
    let two_pi = 2.0 * std::f64::consts::PI;
    Rect {
        x0: 0.0,
        x1: two_pi,
        y0: 0.0,
        y1: two_pi,
    }
}

impl StudyConfig {
    /// Time-step sweep `tau = {1, 2, 4, 8, 16} 1e-3` against `tau = 5e-4` on 128x128.
    pub fn temporal_default() -> Self {
        StudyConfig {
            mode: StudyMode::Temporal,
            domain: periodic_box(),
            eps: 0.3,
            stabilization: 1.0,
            mobility: 1.0,
            potential: Potential::Untruncated,
            final_time: 0.128,
            initial: InitialCondition::Exp1,
            reference_tau: 5e-4,
            reference_cells: 128,
            taus: vec![1e-3, 2e-3, 4e-3, 8e-3, 16e-3],
            cells: Vec::new(),
        }
    }

    /// Mesh sweep `N = 8, ..., 128` against 256x256 at `tau = 1e-3`.
    pub fn spatial_default() -> Self {
        StudyConfig {
            mode: StudyMode::Spatial,
            reference_tau: 1e-3,
            reference_cells: 256,
            taus: Vec::new(),
            cells: vec![8, 16, 32, 64, 128],
            ..Self::temporal_default()
        }
    }

    pub fn params(&self, mesh: Arc<Mesh>, tau: f64) -> SchemeParams {
        SchemeParams::new(mesh, tau, self.eps, self.stabilization, self.final_time)
            .with_potential(self.potential)
            .with_mobility(self.mobility)
    }

    fn mesh(&self, cells: usize) -> Result<Arc<Mesh>> {
        let r = self.domain;
        Mesh::rectangle(r.x0, r.x1, r.y0, r.y1, cells, cells)
    }

    /// Checks that the reference is at least as fine as every sweep entry,
    /// that time steps divide the final time and that sweeps nest.
    pub fn validate(&self) -> Result<()> {
        step_count(self.final_time, self.reference_tau)?;
        if self.reference_cells == 0 {
            return Err(Error::Argument("reference mesh needs at least one cell".into()));
        }
        match self.mode {
            StudyMode::Temporal => {
                if self.taus.is_empty() {
                    return Err(Error::Argument("temporal study needs at least one time step".into()));
                }
                for &tau in &self.taus {
                    step_count(self.final_time, tau)?;
                    subsample_ratio(tau, self.reference_tau)?;
                }
            }
            StudyMode::Spatial => {
                if self.cells.is_empty() {
                    return Err(Error::Argument("spatial study needs at least one mesh".into()));
                }
                for &n in &self.cells {
                    if n == 0 || n > self.reference_cells || self.reference_cells % n != 0 {
                        return Err(Error::Argument(format!(
                            "mesh {n}x{n} is not a coarsening of the {r}x{r} reference",
                            r = self.reference_cells
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Integer `tau / tau_ref`.
fn subsample_ratio(tau: f64, tau_ref: f64) -> Result<usize> {
    let r = tau / tau_ref;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-9 * k {
        return Err(Error::Argument(format!(
            "time step {tau} is not a multiple of the reference step {tau_ref}"
        )));
    }
    Ok(k as usize)
}

/// One line of a convergence table. The rate on a row compares it with the
/// next finer row.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    /// `tau` or cell width.
    pub resolution: f64,
    pub err_phi_h1: f64,
    pub rate_phi: Option<f64>,
    /// H1 in temporal studies, L2 in spatial ones.
    pub err_c: f64,
    pub rate_c: Option<f64>,
    pub err_mu_h1: f64,
    pub rate_mu: Option<f64>,
}

impl RateRow {
    pub fn new(resolution: f64, err_phi_h1: f64, err_c: f64, err_mu_h1: f64) -> Self {
        RateRow {
            resolution,
            err_phi_h1,
            rate_phi: None,
            err_c,
            rate_c: None,
            err_mu_h1,
            rate_mu: None,
        }
    }

    pub fn error(&self, column: Column) -> f64 {
        match column {
            Column::Phi => self.err_phi_h1,
            Column::C => self.err_c,
            Column::Mu => self.err_mu_h1,
        }
    }

    pub fn rate(&self, column: Column) -> Option<f64> {
        match column {
            Column::Phi => self.rate_phi,
            Column::C => self.rate_c,
            Column::Mu => self.rate_mu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    Phi,
    C,
    Mu,
}

/// `log(e / e_fine) / log(r / r_fine)`, or `None` when undefined.
pub fn observed_rate(e_fine: f64, e: f64, r_fine: f64, r: f64) -> Option<f64> {
    let rate = (e / e_fine).ln() / (r / r_fine).ln();
    rate.is_finite().then_some(rate)
}

/// Sorts by increasing resolution and fills the rate columns; the finest
/// row has none.
pub fn with_rates(mut rows: Vec<RateRow>) -> Vec<RateRow> {
    rows.sort_by(|a, b| a.resolution.total_cmp(&b.resolution));
    for k in 0..rows.len() {
        if k == 0 {
            rows[0].rate_phi = None;
            rows[0].rate_c = None;
            rows[0].rate_mu = None;
            continue;
        }
        let (fine, row) = (&rows[k - 1], &rows[k]);
        let r = |col| observed_rate(fine.error(col), row.error(col), fine.resolution, row.resolution);
        let (p, c, m) = (r(Column::Phi), r(Column::C), r(Column::Mu));
        rows[k].rate_phi = p;
        rows[k].rate_c = c;
        rows[k].rate_mu = m;
    }
    rows
}

/// Least-squares slope of `log(err)` against `log(resolution)`.
pub fn fit_order(rows: &[RateRow], column: Column) -> Result<f64> {
    if rows.len() < 3 {
        return Err(Error::Argument(format!("fitting an order needs at least 3 rows, got {}", rows.len())));
    }
    let mut pts = Vec::with_capacity(rows.len());
    for row in rows {
        let e = row.error(column);
        if !(e > 0.0) || !(row.resolution > 0.0) || !e.is_finite() {
            return Err(Error::Argument(format!(
                "cannot fit through error {e} at resolution {}",
                row.resolution
            )));
        }
        pts.push((row.resolution.ln(), e.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Argument("all rows share one resolution".into()));
    }
    Ok(sxy / sxx)
}

/// Spatial norm applied at each time level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceNorm {
    L2,
    H1,
    /// `||grad v||_{L^{6/5}}`
    GradL65,
}

impl SpaceNorm {
    pub fn eval(self, v: &NodalFunction) -> Result<f64> {
        match self {
            SpaceNorm::L2 => lp_norm(v, 2.0),
            SpaceNorm::H1 => h1_norm(v),
            SpaceNorm::GradL65 => grad_lp_norm(v, 1.2),
        }
    }
}

/// `(sum_k tau ||traj_k - ref_k||^p)^{1/p}`, or the maximum over `k` when
/// `p_time` is infinite.
pub fn time_aggregated_error(
    traj: &[NodalFunction],
    traj_ref: &[NodalFunction],
    tau: f64,
    p_time: f64,
    norm: SpaceNorm,
) -> Result<f64> {
    if traj.len() != traj_ref.len() {
        return Err(Error::Dimension {
            expected: traj_ref.len(),
            got: traj.len(),
        });
    }
    if !(p_time >= 1.0) {
        return Err(Error::Argument(format!("time exponent must be >= 1, got {p_time}")));
    }
    let mut acc = 0.0f64;
    for (u, r) in traj.iter().zip(traj_ref) {
        let e = norm.eval(&u.difference(r)?)?;
        if p_time.is_infinite() {
            acc = acc.max(e);
        } else {
            acc += tau * e.powf(p_time);
        }
    }
    Ok(if p_time.is_infinite() { acc } else { acc.powf(1.0 / p_time) })
}

/// Temporal study rows plus the `||grad e_mu||_{L^{4/3}(L^{6/5})}` monitor
/// for each swept `tau`, in sweep order.
#[derive(Clone, Debug)]
pub struct TemporalStudy {
    pub rows: Vec<RateRow>,
    pub mu_monitor: Vec<(f64, f64)>,
}

fn study_err(resolution: f64) -> impl Fn(Error) -> Error {
    move |e| Error::Study {
        resolution,
        source: Box::new(e),
    }
}

fn simulate(cfg: &StudyConfig, mesh: Arc<Mesh>, tau: f64, mut keep_mu: Option<&mut Vec<NodalFunction>>) -> Result<State> {
    let mut stepper = Stepper::new(cfg.params(mesh.clone(), tau))?;
    let (phi, c) = cfg.initial.fields(&mesh)?;
    let initial = stepper.initial_state(phi, c)?;
    stepper.run(initial, |_, next| {
        if let Some(store) = keep_mu.as_deref_mut() {
            store.push(next.mu.clone());
        }
        Ok(())
    })
}

pub fn temporal_study(cfg: &StudyConfig) -> Result<Vec<RateRow>> {
    Ok(temporal_study_detailed(cfg)?.rows)
}

/// Final-time H1 errors of every field on the shared mesh, plus the
/// time-aggregated chemical-potential monitor.
pub fn temporal_study_detailed(cfg: &StudyConfig) -> Result<TemporalStudy> {
    if cfg.mode != StudyMode::Temporal {
        return Err(Error::Argument("temporal_study needs a temporal configuration".into()));
    }
    cfg.validate()?;
    let mesh = cfg.mesh(cfg.reference_cells)?;
    let mut ref_mu = Vec::new();
    let reference = simulate(cfg, mesh.clone(), cfg.reference_tau, Some(&mut ref_mu))
        .map_err(study_err(cfg.reference_tau))?;

    let mut rows = Vec::new();
    let mut mu_monitor = Vec::new();
    for &tau in &cfg.taus {
        let wrap = study_err(tau);
        let ratio = subsample_ratio(tau, cfg.reference_tau)?;
        let mut mu = Vec::new();
        let last = simulate(cfg, mesh.clone(), tau, Some(&mut mu)).map_err(&wrap)?;
        let sub: Vec<NodalFunction> = (1..=mu.len()).map(|k| ref_mu[k * ratio - 1].clone()).collect();
        let monitor = time_aggregated_error(&mu, &sub, tau, 4.0 / 3.0, SpaceNorm::GradL65).map_err(&wrap)?;
        mu_monitor.push((tau, monitor));
        let err = |a: &NodalFunction, b: &NodalFunction| h1_norm(&a.difference(b)?);
        rows.push(RateRow::new(
            tau,
            err(&last.phi, &reference.phi).map_err(&wrap)?,
            err(&last.c, &reference.c).map_err(&wrap)?,
            err(&last.mu, &reference.mu).map_err(&wrap)?,
        ));
    }
    Ok(TemporalStudy {
        rows: with_rates(rows),
        mu_monitor,
    })
}

/// Final-time errors against the reference interpolated onto each coarse
/// mesh: H1 for `phi` and `mu`, L2 for `c`. Resolution is the cell width.
pub fn spatial_study(cfg: &StudyConfig) -> Result<Vec<RateRow>> {
    if cfg.mode != StudyMode::Spatial {
        return Err(Error::Argument("spatial_study needs a spatial configuration".into()));
    }
    cfg.validate()?;
    let ref_mesh = cfg.mesh(cfg.reference_cells)?;
    let width = cfg.domain.width();
    let reference = simulate(cfg, ref_mesh, cfg.reference_tau, None)
        .map_err(study_err(width / cfg.reference_cells as f64))?;

    let mut rows = Vec::new();
    for &n in &cfg.cells {
        let h = width / n as f64;
        let wrap = study_err(h);
        let mesh = cfg.mesh(n)?;
        let last = simulate(cfg, mesh.clone(), cfg.reference_tau, None).map_err(&wrap)?;
        let on_coarse = |v: &NodalFunction| transfer_to_mesh(v, &mesh);
        let e_phi = h1_norm(&last.phi.difference(&on_coarse(&reference.phi)?)?).map_err(&wrap)?;
        let e_c = lp_norm(&last.c.difference(&on_coarse(&reference.c)?)?, 2.0).map_err(&wrap)?;
        let e_mu = h1_norm(&last.mu.difference(&on_coarse(&reference.mu)?)?).map_err(&wrap)?;
        rows.push(RateRow::new(h, e_phi, e_c, e_mu));
    }
    Ok(with_rates(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(p: f64, scale: f64) -> Vec<RateRow> {
        [1e-3, 2e-3, 4e-3, 8e-3, 16e-3]
            .iter()
            .map(|&r: &f64| {
                let e = scale * r.powf(p);
                RateRow::new(r, e, 2.0 * e, 3.0 * e)
            })
            .collect()
    }

    #[test]
    fn rate_convention() {
        for p in [0.5, 1.0, 2.0] {
            let rows = with_rates(synthetic(p, 7.0));
            assert!(rows[0].rate_phi.is_none());
            for row in &rows[1..] {
                for col in [Column::Phi, Column::C, Column::Mu] {
                    assert!((row.rate(col).unwrap() - p).abs() < 1e-12);
                }
            }
            assert!((fit_order(&rows, Column::Phi).unwrap() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn first_order_pair() {
        let rows = with_rates(vec![
            RateRow::new(2e-3, 7.4492e-2, 1.0, 1.0),
            RateRow::new(1e-3, 2.7729e-2, 1.0, 1.0),
        ]);
        assert_eq!(rows[0].resolution, 1e-3);
        let rate = rows[1].rate_phi.unwrap();
        assert!((rate - (7.4492f64 / 2.7729).log2()).abs() < 1e-12);
        assert!((rate - 1.43).abs() < 5e-3);
        assert_eq!(rows[1].rate_c, Some(0.0));
    }

    #[test]
    fn doubling_errors_keeps_rates() {
        let a = with_rates(synthetic(1.3, 1.0));
        let b = with_rates(synthetic(1.3, 2.0));
        for (x, y) in a.iter().zip(&b) {
            match (x.rate_mu, y.rate_mu) {
                (Some(p), Some(q)) => assert!((p - q).abs() < 1e-12),
                (None, None) => {}
                _ => panic!("rate presence differs"),
            }
        }
    }

    #[test]
    fn zero_error_has_no_rate() {
        let rows = with_rates(vec![RateRow::new(1.0, 0.0, 0.0, 0.0), RateRow::new(2.0, 1.0, 1.0, 1.0)]);
        assert!(rows[1].rate_phi.is_none());
    }

    #[test]
    fn fit_needs_three_rows() {
        let rows = synthetic(1.0, 1.0);
        assert!(fit_order(&rows[..2], Column::Phi).is_err());
    }

    #[test]
    fn subsampling_ratio() {
        assert_eq!(subsample_ratio(16e-3, 5e-4).unwrap(), 32);
        assert_eq!(subsample_ratio(1e-3, 1e-3).unwrap(), 1);
        assert!(subsample_ratio(1.5e-3, 1e-3).is_err());
        assert!(subsample_ratio(5e-4, 1e-3).is_err());
    }

    #[test]
    fn default_configs_validate() {
        StudyConfig::temporal_default().validate().unwrap();
        StudyConfig::spatial_default().validate().unwrap();
        let mut bad = StudyConfig::spatial_default();
        bad.cells.push(48);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn aggregated_error_closed_forms() {
        let m = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 4, 4).unwrap();
        let zero = NodalFunction::zeros(m.clone());
        let a = NodalFunction::constant(m.clone(), 2.0);
        let traj = vec![a.clone(); 5];
        let refs = vec![zero.clone(); 5];
        let tau = 0.1;
        let p = 4.0 / 3.0;
        let got = time_aggregated_error(&traj, &refs, tau, p, SpaceNorm::L2).unwrap();
        assert!((got - (5.0 * tau).powf(1.0 / p) * 2.0).abs() < 1e-13);
        let one = time_aggregated_error(&traj[..1], &refs[..1], tau, p, SpaceNorm::H1).unwrap();
        assert!((one - tau.powf(1.0 / p) * 2.0).abs() < 1e-13);
        assert_eq!(time_aggregated_error(&traj, &traj, tau, p, SpaceNorm::GradL65).unwrap(), 0.0);
        let sup = time_aggregated_error(&traj, &refs, tau, f64::INFINITY, SpaceNorm::L2).unwrap();
        assert!((sup - 2.0).abs() < 1e-14);
        assert!(time_aggregated_error(&traj, &refs[..4], tau, p, SpaceNorm::L2).is_err());
    }
}
