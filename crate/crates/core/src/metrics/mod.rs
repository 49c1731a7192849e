//! Image metrics, point-cloud metrics, DBSCAN cleanup and ground-truth surface sampling.

mod cloud;
mod dbscan;
mod image;
mod sampling;

pub use cloud::{chamfer, cloud_metrics, precision_recall_f1, CloudMetricsReport, NearestNeighbors};
pub use dbscan::{dbscan, dbscan_filter, dbscan_keep, DbscanOptions};
pub use image::{
    image_metrics, psnr, ssim, ssim_with_grad, ssim_with_max, ImageMetricsReport, ViewMetrics, PSNR_IDENTICAL,
    SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW,
};
pub use sampling::sample_target_points;
