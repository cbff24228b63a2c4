//! Text alignment-model files:
//!
//! ```text
//! ALIGN v1
//! D P K
//! <temperature>
//! <text head: K*D weights row-major, then K biases, one per line>
//! <policy head: K*P weights row-major, then K biases>
//! <policy mean: P values>
//! <policy scale: P values>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{AlignmentModel, ProjectionHead};
use crate::error::{Error, Result};

const MAGIC: &str = "ALIGN v1";

pub fn write_model<W: Write>(model: &AlignmentModel, mut out: W) -> Result<()> {
    if !model.normalize {
        return Err(Error::Parameter("only normalized alignment models can be persisted".into()));
    }
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{} {} {}", model.text_dim(), model.policy_dim(), model.k())?;
    writeln!(out, "{:.16e}", model.temperature)?;
    let sections = [
        model.text_head.params(),
        model.policy_head.params(),
        &model.policy_mean,
        &model.policy_scale,
    ];
    for v in sections.into_iter().flatten() {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

pub fn read_model<R: Read>(input: R, origin: &Path) -> Result<AlignmentModel> {
    let err = |line: usize, msg: String| Error::Format { path: origin.to_path_buf(), line, msg };
    let mut lines = Vec::new();
    for (i, l) in BufReader::new(input).lines().enumerate() {
        let l = l?;
        if !l.trim().is_empty() {
            lines.push((i + 1, l));
        }
    }
    let mut it = lines.into_iter();
    match it.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        Some((n, l)) => return Err(err(n, format!("expected {MAGIC:?}, found {l:?}"))),
        None => return Err(err(1, "empty file".into())),
    }
    let (n, dims) = it.next().ok_or_else(|| err(2, "missing dimension line".into()))?;
    let dims = dims
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| err(n, format!("bad dimension {t:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let [d, p, k] = dims[..] else {
        return Err(err(n, "dimension line must be \"D P K\"".into()));
    };
    let mut next_f64 = |what: &str| -> Result<f64> {
        let (n, l) = it.next().ok_or_else(|| err(0, format!("file ends before {what}")))?;
        l.trim().parse::<f64>().map_err(|e| err(n, format!("bad {what} {l:?}: {e}")))
    };
    let temperature = next_f64("temperature")?;
    let mut take = |count: usize, what: &str| (0..count).map(|_| next_f64(what)).collect::<Result<Vec<_>>>();
    let text = take(d * k + k, "text head parameter")?;
    let policy = take(p * k + k, "policy head parameter")?;
    let mean = take(p, "policy mean")?;
    let scale = take(p, "policy scale")?;
    if let Some((n, _)) = it.next() {
        return Err(err(n, "trailing data".into()));
    }
    AlignmentModel::new(
        ProjectionHead::from_params(d, k, text)?,
        ProjectionHead::from_params(p, k, policy)?,
        temperature,
        mean,
        scale,
    )
}

pub fn save_model(model: &AlignmentModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AlignmentModel> {
    read_model(fs::File::open(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = AlignmentModel::random(5, 7, 3, 0.07, &mut rng).unwrap();
        model.policy_mean = vec![0.1, -0.2, 0.3, 1e-300, 5.0, 0.0, -1.5];
        model.policy_scale = vec![1.0, 0.5, 2.0, 1e-9, 3.0, 1.0, 7.25];
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ALIGN v1\n5 7 3\n"));
        let back = read_model(&buf[..], Path::new("m")).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = AlignmentModel::random(2, 2, 2, 0.5, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(read_model(cut.as_bytes(), Path::new("m")).is_err());
        assert!(read_model("ALIGN v2\n".as_bytes(), Path::new("m")).is_err());
    }
}
