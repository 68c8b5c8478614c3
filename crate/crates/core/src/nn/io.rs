//! Checkpoint format: 8-byte magic, `u32` version, six `u32` architecture
//! fields (board size, state channels, tree channels, filters, blocks, head
//! width), `u64` parameter count, then little-endian `f64` parameters in
//! layer declaration order. All integers are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Architecture, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSMCTSNN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_network<W: Write>(net: &Network, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let a = net.architecture();
    for field in [a.board_size, a.state_channels, a.mcts_channels, a.filters, a.blocks, a.head_hidden] {
        w.write_all(&(field as u32).to_le_bytes())?;
    }
    w.write_all(&(net.num_params() as u64).to_le_bytes())?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_network<R: Read>(mut r: R) -> Result<Network> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let mut f = [0usize; 6];
    for v in f.iter_mut() {
        *v = read_u32(&mut r)? as usize;
    }
    let arch = Architecture {
        board_size: f[0],
        state_channels: f[1],
        mcts_channels: f[2],
        filters: f[3],
        blocks: f[4],
        head_hidden: f[5],
    };
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    let expected = Network::zeros(arch)?.num_params();
    if count != expected {
        return Err(Error::Format(format!("{count} parameters for an architecture needing {expected}")));
    }
    let mut raw = vec![0u8; count * 8];
    r.read_exact(&mut raw)?;
    let params = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Network::from_params(arch, params)
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_network(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<Network> {
    read_network(BufReader::new(File::open(path)?))
}
