//! File-exchange bridge to an out-of-process fixer.
//!
//! Each batch gets its own directory: a JSON manifest, one PNG triple per
//! request, and the path is passed to the configured command as its single
//! argument. The process writes one output PNG per entry plus a `done`
//! marker. Everything is 8-bit RGB, so a well-behaved process round-trips
//! byte-exactly.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::error::FixError;
use crate::image::ColorImage;

use super::{DenoiseCoeffs, FixRequest, Fixer};

const DONE_MARKER: &str = "done";
const MANIFEST: &str = "manifest.json";
const POLL_INTERVAL: Duration = Duration::from_millis(50);

#[derive(serde::Serialize, serde::Deserialize)]
struct ManifestEntry {
    view_id: String,
    artifact: String,
    guidance: String,
    reference: String,
    output: String,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    coefficients: Option<DenoiseCoeffs>,
    entries: Vec<ManifestEntry>,
}

pub struct ExternalFixer {
    command: PathBuf,
    exchange_root: PathBuf,
    coeffs: Option<DenoiseCoeffs>,
    timeout: Duration,
    batch_counter: Mutex<u64>,
}

impl ExternalFixer {
    pub fn new(command: impl Into<PathBuf>, exchange_root: impl Into<PathBuf>) -> Self {
        ExternalFixer {
            command: command.into(),
            exchange_root: exchange_root.into(),
            coeffs: None,
            timeout: Duration::from_secs(300),
            batch_counter: Mutex::new(0),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_coeffs(mut self, coeffs: DenoiseCoeffs) -> Self {
        self.coeffs = Some(coeffs);
        self
    }

    fn run_batch(&self, dir: &Path, manifest: &Manifest) -> Result<(), FixError> {
        let io_err = |e: std::io::Error| FixError::Process(e.to_string());
        fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(manifest).unwrap())
            .map_err(io_err)?;

        let stderr_path = dir.join("stderr.log");
        let stderr_file = fs::File::create(&stderr_path).map_err(io_err)?;
        let mut child = Command::new(&self.command)
            .arg(dir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(stderr_file)
            .spawn()
            .map_err(|e| FixError::Process(format!("failed to spawn {:?}: {e}", self.command)))?;

        let started = Instant::now();
        let done = dir.join(DONE_MARKER);
        loop {
            if done.exists() {
                // The process owns no further work; reap it.
                let _ = child.kill();
                let _ = child.wait();
                return Ok(());
            }
            match child.try_wait().map_err(io_err)? {
                Some(status) => {
                    if done.exists() {
                        return Ok(());
                    }
                    let tail = fs::read_to_string(&stderr_path).unwrap_or_default();
                    let tail = tail.chars().rev().take(512).collect::<Vec<_>>().iter().rev().collect::<String>();
                    return Err(FixError::Process(format!(
                        "exited with {status} before writing the done marker; stderr: {tail:?}"
                    )));
                }
                None => {
                    if started.elapsed() > self.timeout {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(FixError::Timeout(self.timeout));
                    }
                    std::thread::sleep(POLL_INTERVAL);
                }
            }
        }
    }
}

impl Fixer for ExternalFixer {
    fn fix(&self, request: &FixRequest) -> Result<ColorImage, FixError> {
        self.fix_batch(std::slice::from_ref(request)).pop().unwrap()
    }

    fn fix_batch(&self, requests: &[FixRequest]) -> Vec<Result<ColorImage, FixError>> {
        // One exchange directory per batch; the counter serializes batches.
        let mut counter = self.batch_counter.lock().unwrap();
        let batch_id = *counter;
        *counter += 1;

        let dir = self.exchange_root.join(format!("batch_{batch_id:06}"));
        if let Err(e) = fs::create_dir_all(&dir) {
            return requests
                .iter()
                .map(|_| Err(FixError::Process(format!("cannot create {dir:?}: {e}"))))
                .collect();
        }

        let mut results: Vec<Option<Result<ColorImage, FixError>>> = Vec::new();
        let mut entries = Vec::new();
        let mut sent = Vec::new();
        for (i, req) in requests.iter().enumerate() {
            if let Err(e) = req.validate() {
                results.push(Some(Err(e)));
                continue;
            }
            let entry = ManifestEntry {
                view_id: req.view_id.0.clone(),
                artifact: format!("{i:04}_artifact.png"),
                guidance: format!("{i:04}_guidance.png"),
                reference: format!("{i:04}_reference.png"),
                output: format!("{i:04}_output.png"),
            };
            let write = req
                .artifact_image
                .write_png(&dir.join(&entry.artifact))
                .and_then(|_| req.guidance_image.write_png(&dir.join(&entry.guidance)))
                .and_then(|_| req.reference_image.write_png(&dir.join(&entry.reference)));
            if let Err(e) = write {
                results.push(Some(Err(FixError::Process(format!("payload write failed: {e}")))));
                continue;
            }
            results.push(None);
            sent.push(i);
            entries.push(entry);
        }

        if !entries.is_empty() {
            let manifest = Manifest {
                coefficients: self.coeffs,
                entries,
            };
            match self.run_batch(&dir, &manifest) {
                Ok(()) => {
                    for (slot, entry) in sent.iter().zip(&manifest.entries) {
                        let out = ColorImage::read_png(&dir.join(&entry.output)).map_err(|e| {
                            FixError::Failed {
                                view_id: requests[*slot].view_id.clone(),
                                message: format!("missing or unreadable output {}: {e}", entry.output),
                            }
                        });
                        results[*slot] = Some(out);
                    }
                }
                Err(e) => {
                    let msg = e.to_string();
                    for slot in &sent {
                        let err = match e {
                            FixError::Timeout(d) => FixError::Timeout(d),
                            _ => FixError::Process(msg.clone()),
                        };
                        results[*slot] = Some(Err(err));
                    }
                }
            }
        }

        results.into_iter().map(|r| r.unwrap()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::ViewId;
    use std::os::unix::fs::PermissionsExt;

    fn write_script(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
        path
    }

    /// Copies each entry's artifact to its output, driven by the manifest.
    fn echo_script(dir: &Path) -> PathBuf {
        write_script(
            dir,
            "echo_fixer.py",
            r#"#!/usr/bin/env python3
import json, os, shutil, sys
d = sys.argv[1]
with open(os.path.join(d, "manifest.json")) as f:
    manifest = json.load(f)
for e in manifest["entries"]:
    shutil.copyfile(os.path.join(d, e["artifact"]), os.path.join(d, e["output"]))
open(os.path.join(d, "done"), "w").close()
"#,
        )
    }

    fn quantized_request(id: &str, seed: u8) -> FixRequest {
        // Values on the 8-bit grid survive the PNG round trip exactly.
        let img = |base: u8| {
            ColorImage::from_fn(9, 7, |x, y| {
                let k = (base as usize + 13 * x + 31 * y) % 256;
                [
                    k as f64 / 255.0,
                    (255 - k) as f64 / 255.0,
                    (k / 2) as f64 / 255.0,
                ]
            })
        };
        FixRequest {
            artifact_image: img(seed),
            guidance_image: img(seed.wrapping_add(40)),
            reference_image: img(seed.wrapping_add(90)),
            view_id: ViewId(id.into()),
        }
    }

    #[test]
    fn echo_round_trip_is_lossless() {
        let tmp = tempfile::tempdir().unwrap();
        let script = echo_script(tmp.path());
        let fixer = ExternalFixer::new(&script, tmp.path().join("exchange"));
        let reqs = vec![quantized_request("a", 0), quantized_request("b", 5)];
        let outs = fixer.fix_batch(&reqs);
        for (req, out) in reqs.iter().zip(outs) {
            assert_eq!(out.unwrap(), req.artifact_image);
        }
        // Single-request entry point shares the batch path.
        let one = fixer.fix(&reqs[0]).unwrap();
        assert_eq!(one, reqs[0].artifact_image);
    }

    #[test]
    fn manifest_lists_every_entry_with_coefficients() {
        let tmp = tempfile::tempdir().unwrap();
        let script = echo_script(tmp.path());
        let coeffs = DenoiseCoeffs {
            xi_t: 0.81,
            xi_prev: 0.25,
            eta_t: 2.0,
            eta_prev: 1.0,
            sigma_t: 0.0,
            t_fixed: 25,
        };
        let root = tmp.path().join("exchange");
        let fixer = ExternalFixer::new(&script, &root).with_coeffs(coeffs);
        fixer.fix_batch(&[quantized_request("cam7", 3)]);
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(root.join("batch_000000").join(MANIFEST)).unwrap())
                .unwrap();
        assert_eq!(manifest.entries.len(), 1);
        assert_eq!(manifest.entries[0].view_id, "cam7");
        assert_eq!(manifest.coefficients, Some(coeffs));
        for name in [
            &manifest.entries[0].artifact,
            &manifest.entries[0].guidance,
            &manifest.entries[0].reference,
        ] {
            assert!(root.join("batch_000000").join(name).exists());
        }
    }

    #[test]
    fn slow_process_times_out() {
        let tmp = tempfile::tempdir().unwrap();
        let script = write_script(tmp.path(), "slow.sh", "#!/bin/sh\nexec sleep 30\n");
        let fixer = ExternalFixer::new(&script, tmp.path().join("exchange"))
            .with_timeout(Duration::from_millis(200));
        let started = Instant::now();
        let out = fixer.fix(&quantized_request("v", 1));
        assert!(started.elapsed() < Duration::from_secs(10));
        assert!(matches!(out, Err(FixError::Timeout(_))));
    }

    #[test]
    fn failing_process_reports_exit_and_stderr() {
        let tmp = tempfile::tempdir().unwrap();
        let script = write_script(tmp.path(), "fail.sh", "#!/bin/sh\necho boom >&2\nexit 3\n");
        let fixer = ExternalFixer::new(&script, tmp.path().join("exchange"));
        match fixer.fix(&quantized_request("v", 1)) {
            Err(FixError::Process(msg)) => {
                assert!(msg.contains("boom"), "{msg}");
                assert!(msg.contains("3"), "{msg}");
            }
            other => panic!("expected process error, got {other:?}"),
        }
    }

    #[test]
    fn missing_output_fails_that_entry_only() {
        let tmp = tempfile::tempdir().unwrap();
        // Completes the protocol but only answers the first entry.
        let script = write_script(
            tmp.path(),
            "partial.py",
            r#"#!/usr/bin/env python3
import json, os, shutil, sys
d = sys.argv[1]
with open(os.path.join(d, "manifest.json")) as f:
    manifest = json.load(f)
e = manifest["entries"][0]
shutil.copyfile(os.path.join(d, e["artifact"]), os.path.join(d, e["output"]))
open(os.path.join(d, "done"), "w").close()
"#,
        );
        let fixer = ExternalFixer::new(&script, tmp.path().join("exchange"));
        let reqs = vec![quantized_request("first", 2), quantized_request("second", 9)];
        let mut outs = fixer.fix_batch(&reqs);
        assert_eq!(outs.remove(0).unwrap(), reqs[0].artifact_image);
        assert!(matches!(outs.remove(0), Err(FixError::Failed { .. })));
    }

    #[test]
    fn invalid_request_never_reaches_the_process() {
        let tmp = tempfile::tempdir().unwrap();
        // A command that would fail loudly if invoked.
        let fixer = ExternalFixer::new("/nonexistent/fixer", tmp.path().join("exchange"));
        let mut req = quantized_request("v", 0);
        req.guidance_image = ColorImage::new(1, 1);
        assert!(matches!(fixer.fix(&req), Err(FixError::Failed { .. })));
    }
}
