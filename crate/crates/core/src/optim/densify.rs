use nalgebra::{Vector3, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::raster::SceneGradients;
use crate::types::Scene;

use super::TrainConfig;

/// Scale divisor applied to both children of a split.
pub const SPLIT_SHRINK: f64 = 1.6;

/// Positional-gradient statistics accumulated between densification events.
#[derive(Debug, Clone, PartialEq)]
pub struct DensifyStats {
    pub grad2d_sum: Vec<f64>,
    pub position_grad_sum: Vec<Vector3<f64>>,
    /// Views in which the primitive was visible.
    pub count: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad2d_sum: vec![0.0; n],
            position_grad_sum: vec![Vector3::zeros(); n],
            count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count.is_empty()
    }

    pub fn accumulate(&mut self, grads: &SceneGradients) {
        for i in 0..self.len().min(grads.len()) {
            if grads.visible[i] && grads.grad2d[i].is_finite() {
                self.grad2d_sum[i] += grads.grad2d[i];
                self.position_grad_sum[i] += grads.position(i);
                self.count[i] += 1;
            }
        }
    }

    pub fn mean_grad2d(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.grad2d_sum[i] / self.count[i] as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensifyOutcome {
    pub scene: Scene,
    /// For each new primitive, the old primitive whose optimizer state it keeps.
    pub origin: Vec<Option<usize>>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// One densification and pruning pass.
///
/// High-gradient primitives are cloned when small and split when larger than
/// `split_scale`. Primitives with weak backscatter or a largest axis above
/// `max_radius_factor × illumination_extent` are removed.
pub fn densify_and_prune(
    scene: &Scene,
    stats: &DensifyStats,
    config: &TrainConfig,
    illumination_extent: f64,
    position_lr: f64,
    iteration: usize,
) -> DensifyOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let cap = config.max_radius_factor * illumination_extent;
    let mut out = DensifyOutcome {
        scene: Scene {
            primitives: Vec::with_capacity(scene.len()),
            metadata: scene.metadata.clone(),
        },
        origin: Vec::with_capacity(scene.len()),
        cloned: 0,
        split: 0,
        pruned: 0,
    };
    let push = |out: &mut DensifyOutcome, p, o| {
        out.scene.primitives.push(p);
        out.origin.push(o);
    };
    for (i, prim) in scene.primitives.iter().enumerate() {
        let weak = config.prune && (prim.backscatter() < config.prune_phase_floor || !prim.is_finite());
        let huge = config.prune && prim.max_scale() > cap;
        if weak || huge {
            out.pruned += 1;
            continue;
        }
        let hot = config.densify && i < stats.len() && stats.mean_grad2d(i) > config.densify_grad_threshold;
        if !hot {
            push(&mut out, prim.clone(), Some(i));
        } else if prim.max_scale() <= config.split_scale {
            push(&mut out, prim.clone(), Some(i));
            let mut clone = prim.clone();
            let g = stats.position_grad_sum[i];
            if g.norm() > 0.0 {
                clone.position -= g.normalize() * position_lr;
            }
            push(&mut out, clone, None);
            out.cloned += 1;
        } else {
            let cov = prim.covariance().unwrap_or_else(|_| nalgebra::Matrix3::identity() * prim.max_scale().powi(2));
            let eig = SymmetricEigen::new(cov);
            let root = eig.eigenvectors * nalgebra::Matrix3::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
            for _ in 0..2 {
                let z = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
                let mut child = prim.clone();
                child.position += root * z;
                child.log_scales -= Vector3::repeat(SPLIT_SHRINK.ln());
                push(&mut out, child, None);
            }
            out.split += 1;
        }
    }
    out
}
