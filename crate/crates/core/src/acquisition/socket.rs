//! Line-delimited socket transport. The wire format is the replay format:
//! a JSON descriptor line followed by CSV rows.

use std::io::{BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::replay::{write_header, write_row, ReplayReader};
use super::{AcquisitionError, DeviceDescriptor, Result, SampleFrame};

pub(super) fn connect(address: &str, timeout: Duration) -> Result<ReplayReader<TcpStream>> {
    let addrs: Vec<_> = address
        .to_socket_addrs()
        .map_err(|e| AcquisitionError::Transport(format!("{address}: {e}")))?
        .collect();
    let mut last_err = None;
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, timeout) {
            Ok(stream) => {
                stream
                    .set_read_timeout(Some(timeout.max(Duration::from_secs(5))))
                    .map_err(|e| AcquisitionError::Transport(e.to_string()))?;
                return ReplayReader::from_reader(stream);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(AcquisitionError::Transport(match last_err {
        Some(e) => format!("{address}: {e}"),
        None => format!("{address}: no address resolved"),
    }))
}

/// Accepts one client on `listener` and streams `frames` to it.
pub fn serve_frames<I>(listener: TcpListener, descriptor: &DeviceDescriptor, frames: I) -> std::io::Result<()>
where
    I: IntoIterator<Item = SampleFrame>,
{
    let (stream, _) = listener.accept()?;
    let mut w = BufWriter::new(stream);
    write_header(&mut w, descriptor)?;
    for f in frames {
        write_row(&mut w, &f)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use crate::acquisition::{open_source, serve_frames, synth_signal, SourceConfig, SynthSpec};
    use std::net::TcpListener;

    #[test]
    fn socket_stream_matches_source_frames() {
        let spec = SynthSpec::muse_like(2.0, 256.0, 100.0);
        let frames: Vec<_> = synth_signal(&spec, 3).unwrap().collect();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let desc = spec.descriptor();
        let sent = frames.clone();
        let server = std::thread::spawn(move || serve_frames(listener, &desc, sent).unwrap());

        let handle =
            open_source(&SourceConfig::Socket { address: addr.to_string(), timeout_ms: 1000 })
                .unwrap();
        assert_eq!(handle.descriptor().channel_count, 5);
        let got: Vec<_> = handle.map(|f| f.unwrap()).collect();
        server.join().unwrap();
        assert_eq!(got, frames);
    }
}
