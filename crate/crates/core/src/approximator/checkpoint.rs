//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "DINQ"            4 bytes magic
//! version           u16
//! dueling           u8   (0 or 1)
//! activation        u8   (0 = rectifier)
//! n_layers          u32
//! layer_sizes       n_layers × u32
//! n_params          u64
//! params            n_params × f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, MlpSpec, Params};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DINQ";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(params: &Params, mut out: W) -> Result<()> {
    let spec = params.spec();
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&[spec.dueling() as u8])?;
    out.write_all(&[match spec.activation() {
        Activation::Relu => 0u8,
    }])?;
    out.write_all(&(spec.layer_sizes().len() as u32).to_le_bytes())?;
    for size in spec.layer_sizes() {
        out.write_all(&(*size as u32).to_le_bytes())?;
    }
    out.write_all(&(params.len() as u64).to_le_bytes())?;
    for v in params.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact<R: Read, const N: usize>(input: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated checkpoint while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Params> {
    let magic: [u8; 4] = read_exact(&mut input, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected \"DINQ\""
        )));
    }
    let version = u16::from_le_bytes(read_exact(&mut input, "version")?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let [dueling] = read_exact::<_, 1>(&mut input, "dueling flag")?;
    let [activation] = read_exact::<_, 1>(&mut input, "activation")?;
    if dueling > 1 || activation != 0 {
        return Err(Error::Format("corrupt spec header".into()));
    }
    let n_layers = u32::from_le_bytes(read_exact(&mut input, "layer count")?) as usize;
    if n_layers > 1024 {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let mut sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        sizes.push(u32::from_le_bytes(read_exact(&mut input, "layer size")?) as usize);
    }
    let spec = MlpSpec::new(sizes, dueling == 1).map_err(|e| Error::Format(e.to_string()))?;
    let n_params = u64::from_le_bytes(read_exact(&mut input, "parameter count")?) as usize;
    if n_params != spec.param_count() {
        return Err(Error::Format(format!(
            "header declares {n_params} parameters, spec implies {}",
            spec.param_count()
        )));
    }
    let mut data = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        data.push(f64::from_le_bytes(read_exact(&mut input, "parameters")?));
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    Params::from_flat(&spec, data)
}

pub fn save_checkpoint(params: &Params, path: &Path) -> Result<()> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<Params> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
