use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{
    EmbedderSpec, EmbeddingError, EmbeddingVector, ExgEmbedder, ExgWindow, Modality, Result,
    SpectralEmbedder, TextEmbedder,
};
use crate::scalar::Real;

/// One request line sent to an external embedder process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRequest {
    pub modality: Modality,
    /// Text for text models; spectral feature vector for EXG models.
    pub payload: serde_json::Value,
}

/// One response line: either `{"vector": [...]}` or `{"error": "..."}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExternalResponse {
    Vector { vector: Vec<f64> },
    Error { error: String },
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Self> {
        let (prog, args) = command
            .split_first()
            .ok_or_else(|| EmbeddingError::External("empty command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| EmbeddingError::External(format!("spawn {prog}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child, stdin, stdout })
    }

    fn call(&mut self, request: &ExternalRequest) -> Result<Vec<f64>> {
        let io = |e: std::io::Error| EmbeddingError::External(e.to_string());
        let mut line = serde_json::to_string(request).map_err(|e| EmbeddingError::External(e.to_string()))?;
        line.push('\n');
        self.stdin.write_all(line.as_bytes()).map_err(io)?;
        self.stdin.flush().map_err(io)?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply).map_err(io)? == 0 {
            return Err(EmbeddingError::External("worker closed its output".into()));
        }
        match serde_json::from_str(&reply) {
            Ok(ExternalResponse::Vector { vector }) => Ok(vector),
            Ok(ExternalResponse::Error { error }) => Err(EmbeddingError::External(error)),
            Err(e) => Err(EmbeddingError::External(format!("bad response: {e}"))),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Embedder backed by a pool of child processes speaking JSON lines on stdio.
///
/// A worker that fails is respawned on the next request.
pub struct ExternalEmbedder {
    spec: EmbedderSpec,
    workers: Vec<Mutex<Option<Worker>>>,
    next: AtomicUsize,
}

impl std::fmt::Debug for ExternalEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalEmbedder").field("spec", &self.spec).finish()
    }
}

impl ExternalEmbedder {
    pub fn new(spec: EmbedderSpec) -> Result<Self> {
        if spec.command.is_empty() {
            return Err(EmbeddingError::External("external embedder needs a command".into()));
        }
        let workers = (0..spec.pool.max(1)).map(|_| Mutex::new(None)).collect();
        Ok(Self { spec, workers, next: AtomicUsize::new(0) })
    }

    fn request(&self, request: &ExternalRequest) -> Result<Vec<f64>> {
        let slot = &self.workers[self.next.fetch_add(1, Ordering::Relaxed) % self.workers.len()];
        let mut guard = slot.lock();
        if guard.is_none() {
            *guard = Some(Worker::spawn(&self.spec.command)?);
        }
        let out = guard.as_mut().expect("worker present").call(request);
        if let Err(EmbeddingError::External(_)) = &out {
            // Drop the worker so a wedged process does not poison later calls.
            *guard = None;
        }
        let v = out?;
        if v.len() != self.spec.dimension {
            return Err(EmbeddingError::Dimension { expected: self.spec.dimension, got: v.len() });
        }
        Ok(v)
    }

    fn finish<T: Real>(&self, v: Vec<f64>, at: f64) -> Result<EmbeddingVector<T>> {
        let values = v.into_iter().map(T::lit).collect();
        EmbeddingVector::normalized(values, self.spec.modality, self.spec.model_id.clone(), at)
    }
}

impl<T: Real> TextEmbedder<T> for ExternalEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_text(&self, text: &str, at: f64) -> Result<EmbeddingVector<T>> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let req = ExternalRequest { modality: Modality::Text, payload: text.into() };
        self.finish(self.request(&req)?, at)
    }
}

impl<T: Real> ExgEmbedder<T> for ExternalEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_exg(&self, window: ExgWindow<'_, T>) -> Result<EmbeddingVector<T>> {
        let feats: Vec<f64> =
            SpectralEmbedder::new().features(window)?.into_iter().map(|v| v.to_f64_lossy()).collect();
        let at = window.epochs.last().map_or(0.0, |e| e.t_end());
        let req = ExternalRequest { modality: Modality::Exg, payload: feats.into() };
        self.finish(self.request(&req)?, at)
    }
}
