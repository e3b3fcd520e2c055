//! First-order perturbation analysis: coefficients, the triplet-sum and
//! phase-noise filter models, energy-sequence statistics and moment-based
//! SNR prediction.

mod cache;
mod energy;
mod kernel;
mod learn;
mod model;
mod predict;

pub use cache::{cache_path, load_or_compute, read_kernel, write_kernel};
pub use energy::{
    ccdm_edi_closed_form, edi, empirical_autocorrelation, expected_welch_psd, normalized_energies, psd_estimate,
    psd_from_autocorrelation, window_sizes, windowed_moments, EnergySource, PsdEstimate,
    WindowedMoments, PSD_SEGMENT,
};
pub use kernel::{
    compute_block, gaussian_block, kmeans_1d, memory_symbols, quantized_level_count,
    walkoff_symbols, KernelBlock, PerturbationKernel, PulseShape, Quadrature, Truncation,
};
pub use learn::{fit_overall_filter, residual_phase, LearnedFilter};
pub use model::{
    cpr_filter, filter_response, filter_taps, phase_noise, residual_after_cpr, triplet_sum, Boundary,
    ChannelTerms, FilterResponse, FilterTaps, TripletModel,
};
pub use predict::{predict_snr, AminModel, NlinCalibration};
