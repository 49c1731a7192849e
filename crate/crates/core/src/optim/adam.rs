use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::raster::SceneGradients;
use crate::sh::coeff_count;
use crate::types::{param, GaussianPrimitive, Scene, N_PARAMS};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// First and second moments per primitive parameter, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<[f64; N_PARAMS]>,
    pub v: Vec<[f64; N_PARAMS]>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![[0.0; N_PARAMS]; n],
            v: vec![[0.0; N_PARAMS]; n],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Rebuilds the moments after the scene changed size. `origin[i]` names the
    /// old primitive whose moments the new primitive `i` inherits; `None` starts fresh.
    pub fn remap(&mut self, origin: &[Option<usize>]) {
        let pick = |buf: &[[f64; N_PARAMS]], o: &Option<usize>| o.map_or([0.0; N_PARAMS], |j| buf[j]);
        self.m = origin.iter().map(|o| pick(&self.m, o)).collect();
        self.v = origin.iter().map(|o| pick(&self.v, o)).collect();
    }
}

/// Step sizes for one update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOptions {
    pub position: f64,
    pub rotation: f64,
    pub log_scales: f64,
    pub sh: f64,
    pub extinction: f64,
    /// Active SH degree; higher-order coefficients get no update.
    pub sh_degree: usize,
    /// Largest position change per step, meters.
    pub displacement_bound: Option<f64>,
}

impl StepOptions {
    fn rates(&self) -> [f64; N_PARAMS] {
        let mut lr = [0.0; N_PARAMS];
        lr[param::POSITION..param::ROTATION].fill(self.position);
        lr[param::ROTATION..param::LOG_SCALES].fill(self.rotation);
        lr[param::LOG_SCALES..param::SH].fill(self.log_scales);
        let active = coeff_count(self.sh_degree.min(crate::sh::MAX_DEGREE));
        lr[param::SH..param::SH + active].fill(self.sh);
        lr[param::KE_FORWARD] = self.extinction;
        lr[param::KE_BACKWARD] = self.extinction;
        lr
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Primitives left untouched because their gradient was not finite.
    pub skipped: usize,
    /// Primitives whose position step hit the displacement bound.
    pub clamped: usize,
}

/// One Adam update of every primitive in place.
pub fn adam_step(scene: &mut Scene, grads: &SceneGradients, state: &mut AdamState, opts: &StepOptions) -> Result<StepStats> {
    let n = scene.len();
    if grads.len() != n || state.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{n} primitives but {} gradients and {} optimizer slots",
            grads.len(),
            state.len()
        )));
    }
    let lr = opts.rates();
    state.t += 1;
    let c1 = 1.0 - BETA1.powf(state.t as f64);
    let c2 = 1.0 - BETA2.powf(state.t as f64);
    let mut stats = StepStats::default();
    for (i, prim) in scene.primitives.iter_mut().enumerate() {
        let g = &grads.params[i];
        if !g.iter().all(|v| v.is_finite()) {
            stats.skipped += 1;
            continue;
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let mut p = prim.to_params();
        let mut step = [0.0; N_PARAMS];
        for k in 0..N_PARAMS {
            if lr[k] == 0.0 {
                continue;
            }
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
            step[k] = -lr[k] * (m[k] / c1) / ((v[k] / c2).sqrt() + EPSILON);
        }
        if let Some(bound) = opts.displacement_bound {
            let d = Vector3::new(step[0], step[1], step[2]);
            let len = d.norm();
            if len > bound {
                let d = d * (bound / len);
                step[..3].copy_from_slice(d.as_slice());
                stats.clamped += 1;
            }
        }
        for k in 0..N_PARAMS {
            p[k] += step[k];
        }
        let mut next = GaussianPrimitive::from_params(&p);
        let qn = next.rotation.norm();
        if qn > 0.0 && qn.is_finite() {
            next.rotation /= qn;
        } else {
            next.rotation = prim.rotation;
        }
        *prim = next;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> StepOptions {
        StepOptions {
            position: 0.01,
            rotation: 1e-3,
            log_scales: 5e-3,
            sh: 2.5e-3,
            extinction: 5e-2,
            sh_degree: 3,
            displacement_bound: None,
        }
    }

    fn scene() -> Scene {
        let mut p = GaussianPrimitive::isotropic(Vector3::new(0.5, -0.2, 1.0), 0.3, 1.0, 0.2);
        p.sh_coeffs[5] = 0.1;
        Scene::new(vec![p])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scene();
        let before = s.clone();
        let mut st = AdamState::new(1);
        for _ in 0..10 {
            adam_step(&mut s, &SceneGradients::zeros(1), &mut st, &opts()).unwrap();
        }
        assert_eq!(s, before);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut s = scene();
        let mut st = AdamState::new(1);
        let mut g = SceneGradients::zeros(1);
        g.params[0][0] = 2.0;
        g.params[0][2] = -0.5;
        for _ in 0..50 {
            adam_step(&mut s, &g, &mut st, &opts()).unwrap();
        }
        let p = s.primitives[0].position;
        // Adam moves by about lr per step regardless of gradient size.
        assert!((p.x - (0.5 - 0.5)).abs() < 1e-6, "{p}");
        assert!((p.z - 1.5).abs() < 1e-6);
        assert_eq!(p.y, -0.2);
    }

    #[test]
    fn displacement_is_clamped() {
        let mut s = scene();
        let mut st = AdamState::new(1);
        let mut g = SceneGradients::zeros(1);
        g.params[0][..3].copy_from_slice(&[1e12, -3e12, 5e11]);
        let o = StepOptions {
            position: 10.0,
            displacement_bound: Some(0.05),
            ..opts()
        };
        let before = s.primitives[0].position;
        let stats = adam_step(&mut s, &g, &mut st, &o).unwrap();
        assert_eq!(stats.clamped, 1);
        assert!(((s.primitives[0].position - before).norm() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradients_are_skipped() {
        let mut s = Scene::new(vec![scene().primitives[0].clone(); 2]);
        let mut st = AdamState::new(2);
        let mut g = SceneGradients::zeros(2);
        g.params[0][4] = f64::NAN;
        g.params[1][4] = 1.0;
        let before = s.clone();
        let stats = adam_step(&mut s, &g, &mut st, &opts()).unwrap();
        assert_eq!(stats.skipped, 1);
        assert_eq!(s.primitives[0], before.primitives[0]);
        assert!(s.primitives[1].is_finite());
        assert!((s.primitives[1].rotation.norm() - 1.0).abs() < 1e-12);
        assert_eq!(st.m[0], [0.0; N_PARAMS]);
    }

    #[test]
    fn inactive_sh_bands_are_frozen() {
        let mut s = scene();
        let mut st = AdamState::new(1);
        let mut g = SceneGradients::zeros(1);
        g.params[0][param::SH..param::SH + 16].fill(1.0);
        adam_step(&mut s, &g, &mut st, &StepOptions { sh_degree: 1, ..opts() }).unwrap();
        let c = &s.primitives[0].sh_coeffs;
        assert!(c[..4].iter().all(|&v| v != 0.0 && v != 1.0));
        assert_eq!(c[5], 0.1);
        assert!(c[4..].iter().enumerate().all(|(k, &v)| v == if k == 1 { 0.1 } else { 0.0 }));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut s = scene();
        assert!(adam_step(&mut s, &SceneGradients::zeros(2), &mut AdamState::new(1), &opts()).is_err());
    }

    #[test]
    fn remap_carries_moments() {
        let mut st = AdamState::new(2);
        st.m[1][0] = 3.0;
        st.remap(&[Some(1), None, Some(1)]);
        assert_eq!(st.len(), 3);
        assert_eq!((st.m[0][0], st.m[1][0], st.m[2][0]), (3.0, 0.0, 3.0));
    }
}
