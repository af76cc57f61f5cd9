use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::{Api, ApiError, ErrorCode};
use crate::acquisition::{ChannelKind, SourceHandle};
use crate::dsp::{Calibration, EpochProcessor, ProcessedEpoch, ProcessorConfig};
use crate::embeddings::{ExgEmbedder, ExgWindow, SpectralEmbedder};
use crate::store::NewEpoch;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub processor: ProcessorConfig,
    pub calibration: Calibration,
    /// Store a window embedding every this many epochs; 0 disables them.
    pub embed_every: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub frames: usize,
    pub epochs: usize,
    pub embedded: usize,
    pub dropped: usize,
}

/// Feeds a source through the DSP stage into the store until the source ends
/// or `stop` is set. The session is closed on exit.
pub fn run_pipeline(
    api: &Api,
    source: SourceHandle,
    config: &PipelineConfig,
    stop: &AtomicBool,
) -> Result<PipelineReport, ApiError> {
    let device = source.descriptor().clone();
    let roles: Vec<ChannelKind> =
        (0..device.channel_count).map(|c| device.role(c).unwrap_or(ChannelKind::Aux)).collect();
    let mut processor = EpochProcessor::<f64>::new(&device, config.processor.clone(), config.calibration.clone())
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    let embedder = SpectralEmbedder::new();
    let mut report = PipelineReport::default();
    api.set_device(Some(device.clone()), true);

    let store_epoch = |pe: ProcessedEpoch<f64>, report: &mut PipelineReport| -> Result<(), ApiError> {
        let embed = config.embed_every > 0 && report.epochs % config.embed_every == 0;
        let embedding = if embed {
            embedder.embed_exg(ExgWindow { epochs: std::slice::from_ref(&pe.epoch), roles: &roles }).ok()
        } else {
            None
        };
        report.embedded += usize::from(embedding.is_some());
        let rec = api.store().append_epoch(&device, NewEpoch::from(&pe), embedding)?;
        report.epochs += 1;
        api.epoch_stored(&rec);
        Ok(())
    };

    let mut outcome = Ok(());
    for item in source {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let frame = match item {
            Ok(f) => f,
            Err(e) => {
                outcome = Err(ApiError::new(ErrorCode::Internal, e.to_string()));
                break;
            }
        };
        report.frames += 1;
        for pe in processor.push(&frame) {
            if let Err(e) = store_epoch(pe, &mut report) {
                outcome = Err(e);
                break;
            }
        }
        if outcome.is_err() {
            break;
        }
    }
    if outcome.is_ok() && !stop.load(Ordering::Relaxed) {
        for pe in processor.finish() {
            store_epoch(pe, &mut report)?;
        }
    }
    report.dropped = processor.dropped();
    api.set_device(Some(device), false);
    api.store().close_session(None)?;
    outcome.map(|_| report)
}
