//! Portable forest encoding.
//!
//! All integers and floats are little-endian; thresholds are stored as raw
//! IEEE-754 bits so a round trip is bit-exact.
//!
//! ```text
//! magic        4 bytes  "RFDF"
//! version      u16      1
//! feature_len  u32
//! tree_count   u32
//! max_depth    u32      0xFFFF_FFFF = unlimited
//! min_leaf     u32
//! mtry         u32      resolved candidate count
//! bootstrap    u8       0 | 1
//! seed         u64
//! tree_count times:
//!   node_count u32
//!   node_count nodes, preorder (node 0 is the root):
//!     tag u8 = 0  leaf:  vote u8
//!     tag u8 = 1  split: feature u32, threshold f64, left u32, right u32
//! ```
//!
//! Child indices are positions within the same tree's node list and always
//! point forward.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Forest, ForestParams, Node, Tree};
use crate::error::{Error, Result};

pub const FOREST_MAGIC: &[u8; 4] = b"RFDF";
pub const FOREST_VERSION: u16 = 1;
const UNLIMITED_DEPTH: u32 = u32::MAX;
const TAG_LEAF: u8 = 0;
const TAG_SPLIT: u8 = 1;

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

impl Forest {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let p = &self.params;
        w.write_all(FOREST_MAGIC)?;
        w.write_u16::<LE>(FOREST_VERSION)?;
        w.write_u32::<LE>(to_u32(self.feature_len, "feature length")?)?;
        w.write_u32::<LE>(to_u32(self.trees.len(), "tree count")?)?;
        w.write_u32::<LE>(match p.max_depth {
            Some(d) => to_u32(d, "max depth")?.min(UNLIMITED_DEPTH - 1),
            None => UNLIMITED_DEPTH,
        })?;
        w.write_u32::<LE>(to_u32(p.min_leaf, "min leaf")?)?;
        w.write_u32::<LE>(to_u32(p.resolved_mtry(self.feature_len), "mtry")?)?;
        w.write_u8(u8::from(p.bootstrap))?;
        w.write_u64::<LE>(p.seed)?;
        for tree in &self.trees {
            w.write_u32::<LE>(to_u32(tree.nodes().len(), "node count")?)?;
            for node in tree.nodes() {
                match *node {
                    Node::Leaf { vote } => {
                        w.write_u8(TAG_LEAF)?;
                        w.write_u8(vote)?;
                    }
                    Node::Split { feature, threshold, left, right } => {
                        w.write_u8(TAG_SPLIT)?;
                        w.write_u32::<LE>(feature)?;
                        w.write_u64::<LE>(threshold.to_bits())?;
                        w.write_u32::<LE>(left)?;
                        w.write_u32::<LE>(right)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Forest> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FOREST_MAGIC {
            return Err(Error::Format("not a forest (bad magic)".into()));
        }
        let version = r.read_u16::<LE>()?;
        if version != FOREST_VERSION {
            return Err(Error::Format(format!("unsupported forest version {version}")));
        }
        let feature_len = r.read_u32::<LE>()? as usize;
        let tree_count = r.read_u32::<LE>()? as usize;
        let max_depth = match r.read_u32::<LE>()? {
            UNLIMITED_DEPTH => None,
            d => Some(d as usize),
        };
        let min_leaf = r.read_u32::<LE>()? as usize;
        let mtry = r.read_u32::<LE>()? as usize;
        let bootstrap = match r.read_u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bad bootstrap flag {b}"))),
        };
        let seed = r.read_u64::<LE>()?;
        if feature_len == 0 || tree_count == 0 {
            return Err(Error::Format("empty forest header".into()));
        }

        let mut trees = Vec::with_capacity(tree_count.min(1 << 16));
        for t in 0..tree_count {
            let count = r.read_u32::<LE>()? as usize;
            if count == 0 {
                return Err(Error::Format(format!("tree {t} has no nodes")));
            }
            let mut nodes = Vec::with_capacity(count.min(1 << 20));
            for i in 0..count {
                let node = match r.read_u8()? {
                    TAG_LEAF => {
                        let vote = r.read_u8()?;
                        if vote > 1 {
                            return Err(Error::Format(format!("tree {t} node {i}: vote {vote}")));
                        }
                        Node::Leaf { vote }
                    }
                    TAG_SPLIT => {
                        let feature = r.read_u32::<LE>()?;
                        let threshold = f64::from_bits(r.read_u64::<LE>()?);
                        let left = r.read_u32::<LE>()?;
                        let right = r.read_u32::<LE>()?;
                        if feature as usize >= feature_len {
                            return Err(Error::Format(format!("tree {t} node {i}: feature {feature} out of range")));
                        }
                        for child in [left, right] {
                            if child as usize <= i || child as usize >= count {
                                return Err(Error::Format(format!("tree {t} node {i}: bad child {child}")));
                            }
                        }
                        Node::Split { feature, threshold, left, right }
                    }
                    tag => return Err(Error::Format(format!("tree {t} node {i}: unknown tag {tag}"))),
                };
                nodes.push(node);
            }
            trees.push(Tree::from_nodes(nodes));
        }
        let params = ForestParams { tree_count, max_depth, min_leaf, mtry: Some(mtry), bootstrap, seed };
        Forest::from_parts(trees, params, feature_len)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Forest> {
        let mut cursor = bytes;
        let forest = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", cursor.len())));
        }
        Ok(forest)
    }
}
