//! External scorer protocol: run `<command> <absolute-image-path>`, expect exactly one
//! JSON object on stdout and exit status 0.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde_json::{Map, Value};
use wait_timeout::ChildExt;

use super::{AdapterFailure, ScoringError};
use crate::geometry::ImageRaster;

/// Exit status an adapter uses to report that no face was found.
pub const NO_FACE_EXIT_CODE: i32 = 4;

fn failure(command: &str, kind: AdapterFailure) -> ScoringError {
    ScoringError::AdapterFailure {
        command: command.to_string(),
        kind,
    }
}

/// Run the adapter on a file that already exists.
pub fn run_adapter(command: &str, image: &Path, timeout: Duration) -> Result<Map<String, Value>, ScoringError> {
    let argv = shlex::split(command)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| failure(command, AdapterFailure::Spawn("unparseable command line".into())))?;
    let image = std::path::absolute(image).map_err(|e| failure(command, AdapterFailure::Spawn(e.to_string())))?;

    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .arg(&image)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| failure(command, AdapterFailure::Spawn(e.to_string())))?;

    let mut stdout = child.stdout.take().expect("piped");
    let mut stderr = child.stderr.take().expect("piped");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let status = match child
        .wait_timeout(timeout)
        .map_err(|e| failure(command, AdapterFailure::Spawn(e.to_string())))?
    {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(failure(command, AdapterFailure::Timeout(timeout)));
        }
    };
    let out = out_reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();

    if !status.success() {
        let code = status.code();
        if code == Some(NO_FACE_EXIT_CODE) {
            return Err(ScoringError::NoFaceFound {
                command: command.to_string(),
            });
        }
        return Err(failure(
            command,
            AdapterFailure::Exit {
                code,
                stderr: String::from_utf8_lossy(&err).trim().to_string(),
            },
        ));
    }
    let text = String::from_utf8(out).map_err(|_| failure(command, AdapterFailure::Malformed("stdout is not UTF-8".into())))?;
    match serde_json::from_str::<Value>(text.trim()) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(failure(
            command,
            AdapterFailure::Malformed(format!("expected a JSON object, got {other}")),
        )),
        Err(e) => Err(failure(command, AdapterFailure::Malformed(e.to_string()))),
    }
}

/// Write `img` to a temporary PNG and run the adapter on it.
pub fn run_adapter_on_raster(command: &str, img: &ImageRaster, timeout: Duration) -> Result<Map<String, Value>, ScoringError> {
    let file = tempfile::Builder::new()
        .prefix("morphline-")
        .suffix(".png")
        .tempfile()
        .map_err(|e| failure(command, AdapterFailure::Spawn(e.to_string())))?;
    img.to_rgb_image()
        .save_with_format(file.path(), image::ImageFormat::Png)
        .map_err(|e| failure(command, AdapterFailure::Spawn(e.to_string())))?;
    run_adapter(command, file.path(), timeout)
}

pub(crate) fn malformed(command: &str, msg: impl Into<String>) -> ScoringError {
    failure(command, AdapterFailure::Malformed(msg.into()))
}

pub(crate) fn float_array(command: &str, v: Option<&Value>, key: &str) -> Result<Vec<f64>, ScoringError> {
    let arr = v
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(command, format!("missing array `{key}`")))?;
    arr.iter()
        .map(|x| {
            x.as_f64()
                .filter(|f| f.is_finite())
                .ok_or_else(|| malformed(command, format!("non-numeric entry in `{key}`")))
        })
        .collect()
}
