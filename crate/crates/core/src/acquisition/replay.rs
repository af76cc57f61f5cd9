//! Replay files: one JSON header line carrying the [`DeviceDescriptor`],
//! then CSV rows `t,v0,...,vN`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Read, Write};
use std::path::Path;

use super::{AcquisitionError, DeviceDescriptor, Result, SampleFrame};

/// Writes a replay file. Values are printed with the shortest round-trip
/// representation so a re-read is value-exact.
pub fn write_replay<'a, I>(path: &Path, descriptor: &DeviceDescriptor, frames: I) -> std::io::Result<()>
where
    I: IntoIterator<Item = &'a SampleFrame>,
{
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, descriptor)?;
    for f in frames {
        write_row(&mut w, f)?;
    }
    w.flush()
}

pub(crate) fn write_header<W: Write>(w: &mut W, descriptor: &DeviceDescriptor) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, descriptor)?;
    w.write_all(b"\n")
}

pub(crate) fn write_row<W: Write>(w: &mut W, frame: &SampleFrame) -> std::io::Result<()> {
    write!(w, "{}", frame.t)?;
    for v in &frame.values {
        write!(w, ",{v}")?;
    }
    w.write_all(b"\n")
}

/// Reads a whole replay file into memory.
pub fn read_replay(path: &Path) -> Result<(DeviceDescriptor, Vec<SampleFrame>)> {
    let reader = ReplayReader::open(path)?;
    let descriptor = reader.descriptor().clone();
    let frames = reader.collect::<Result<Vec<_>>>()?;
    Ok((descriptor, frames))
}

/// Streaming parser shared by file replay and the socket transport.
pub struct ReplayReader<R> {
    descriptor: DeviceDescriptor,
    lines: Lines<BufReader<R>>,
    line_no: usize,
    last_t: Option<f64>,
    done: bool,
}

impl ReplayReader<File> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|source| AcquisitionError::Open { path: path.to_path_buf(), source })?;
        Self::from_reader(file)
    }
}

impl<R: Read> ReplayReader<R> {
    pub fn from_reader(inner: R) -> Result<Self> {
        let mut lines = BufReader::new(inner).lines();
        let header = match lines.next() {
            Some(Ok(line)) => line,
            Some(Err(e)) => return Err(AcquisitionError::Transport(e.to_string())),
            None => {
                return Err(AcquisitionError::Parse { line: 1, message: "missing header".into() })
            }
        };
        let descriptor: DeviceDescriptor = serde_json::from_str(&header)
            .map_err(|e| AcquisitionError::Parse { line: 1, message: e.to_string() })?;
        descriptor.validate()?;
        Ok(Self { descriptor, lines, line_no: 1, last_t: None, done: false })
    }

    pub fn descriptor(&self) -> &DeviceDescriptor {
        &self.descriptor
    }

    fn parse_row(&mut self, line: &str) -> Result<SampleFrame> {
        let line_no = self.line_no;
        let bad = |message: String| AcquisitionError::Parse { line: line_no, message };
        let mut fields = line.split(',');
        let t: f64 = fields
            .next()
            .ok_or_else(|| bad("empty row".into()))?
            .trim()
            .parse()
            .map_err(|e| bad(format!("timestamp: {e}")))?;
        let values = fields
            .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("value: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != self.descriptor.channel_count {
            return Err(bad(format!(
                "expected {} values, found {}",
                self.descriptor.channel_count,
                values.len()
            )));
        }
        if let Some(prev) = self.last_t {
            if t <= prev {
                return Err(AcquisitionError::NonMonotonic { line: line_no, prev, t });
            }
        }
        self.last_t = Some(t);
        Ok(SampleFrame { t, values })
    }
}

impl<R: Read> Iterator for ReplayReader<R> {
    type Item = Result<SampleFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            self.line_no += 1;
            match self.lines.next() {
                None => {
                    self.done = true;
                    return None;
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(AcquisitionError::Transport(e.to_string())));
                }
                Some(Ok(line)) if line.trim().is_empty() => continue,
                Some(Ok(line)) => {
                    let row = self.parse_row(&line);
                    if row.is_err() {
                        self.done = true;
                    }
                    return Some(row);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{open_source, synth_signal, SourceConfig, SynthSpec};

    #[test]
    fn ten_second_replay_yields_2560_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        let spec = SynthSpec::exg_only(4, 10.0, 256.0, 1_700_000_000.0);
        let frames: Vec<_> = synth_signal(&spec, 7).unwrap().collect();
        write_replay(&path, &spec.descriptor(), &frames).unwrap();

        let handle = open_source(&SourceConfig::Replay { path, pace: false }).unwrap();
        assert_eq!(handle.descriptor().channel_count, 4);
        let back: Vec<_> = handle.map(|f| f.unwrap()).collect();
        assert_eq!(back.len(), 2560);
        assert_eq!(back, frames);
    }

    #[test]
    fn gaps_are_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.csv");
        let spec = SynthSpec::exg_only(4, 4.0, 256.0, 0.0);
        let frames: Vec<_> = synth_signal(&spec, 1)
            .unwrap()
            .filter(|f| !(1.0..2.0).contains(&f.t))
            .collect();
        write_replay(&path, &spec.descriptor(), &frames).unwrap();
        let (_, back) = read_replay(&path).unwrap();
        assert_eq!(back.len(), 3 * 256);
        assert_eq!(back, frames);
    }

    #[test]
    fn malformed_header_and_rows() {
        let r = ReplayReader::from_reader("not json\n".as_bytes());
        assert!(matches!(r.err().unwrap(), AcquisitionError::Parse { line: 1, .. }));

        let d = crate::acquisition::DeviceDescriptor::with_layout("d", 4, 0, 256.0);
        let mut text = serde_json::to_string(&d).unwrap();
        text.push_str("\n0,1,2,3,4\n0.5,1,2,3\n");
        let rows: Vec<_> = ReplayReader::from_reader(text.as_bytes()).unwrap().collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].is_ok());
        assert!(matches!(rows[1], Err(AcquisitionError::Parse { line: 3, .. })));

        let mut text = serde_json::to_string(&d).unwrap();
        text.push_str("\n1,1,2,3,4\n1,1,2,3,4\n");
        let rows: Vec<_> = ReplayReader::from_reader(text.as_bytes()).unwrap().collect();
        assert!(matches!(rows[1], Err(AcquisitionError::NonMonotonic { .. })));
    }
}
