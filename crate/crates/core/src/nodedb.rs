//! Incremental database of dynamic nodes.
//!
//! Frames with similar appearance are grouped into nodes as they arrive. A
//! query is routed with a two-level gate, walking nodes in creation order:
//! first its similarity against the node's founding frame must exceed
//! `alpha`, then the mean similarity over every current member must exceed
//! `beta`. The first node passing both gates absorbs the query and its
//! members become the loop-closure candidates; if no node qualifies the query
//! founds a new node. Nodes are never merged, split, or deleted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{FrameId, PipelineConfig};
use crate::descriptor::{sim_score, Lsgd, SharedLsgd, SimScore};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One group of mutually similar frames. The founding frame stays the
/// representative for the whole life of the node.
#[derive(Clone, Debug)]
pub struct DynamicNode {
    pub node_id: u32,
    /// Members in insertion order; frame ids are strictly increasing.
    pub members: Vec<(FrameId, SharedLsgd)>,
}

impl DynamicNode {
    pub fn representative(&self) -> &SharedLsgd {
        &self.members[0].1
    }
}

/// Ordered collection of dynamic nodes plus the frame-to-node index.
#[derive(Clone, Debug, Default)]
pub struct NodeDatabase {
    nodes: Vec<DynamicNode>,
    frame_index: BTreeMap<FrameId, u32>,
    last_id: Option<FrameId>,
}

/// Outcome of routing one query through the database.
#[derive(Clone, Debug)]
pub struct NodeSelection<T> {
    pub node_id: u32,
    pub created_new: bool,
    /// Members of the selected node scored against the query, in member
    /// order, captured before the query itself was appended. Empty when a
    /// new node was created.
    pub candidates: Vec<(FrameId, SimScore<T>)>,
}

impl NodeDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[DynamicNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn frame_count(&self) -> usize {
        self.frame_index.len()
    }

    /// Node holding the given frame, if the frame was ever inserted.
    pub fn node_of(&self, id: FrameId) -> Option<u32> {
        self.frame_index.get(&id).copied()
    }

    /// Routes `query` through the two-level gate and mutates the database
    /// exactly once: either the query joins the first qualifying node or it
    /// founds a new one.
    pub fn select_or_create<T: Real>(
        &mut self,
        query: &SharedLsgd,
        id: FrameId,
        cfg: &PipelineConfig<T>,
    ) -> Result<NodeSelection<T>> {
        if let Some(last) = self.last_id {
            if id <= last {
                return Err(Error::Input(format!(
                    "frame ids must be strictly increasing: got {id} after {last}"
                )));
            }
        }

        for node in &mut self.nodes {
            let first = sim_score::<T>(query, node.representative())?;
            if first.value <= cfg.alpha {
                continue;
            }
            let mut candidates = Vec::with_capacity(node.members.len());
            candidates.push((node.members[0].0, first));
            for (fid, member) in node.members.iter().skip(1) {
                candidates.push((*fid, sim_score::<T>(query, member)?));
            }
            let sum = candidates
                .iter()
                .fold(T::zero(), |acc, (_, s)| acc + s.value);
            let ave = sum / T::from_usize(candidates.len()).unwrap();
            if ave > cfg.beta {
                let node_id = node.node_id;
                node.members.push((id, query.clone()));
                self.frame_index.insert(id, node_id);
                self.last_id = Some(id);
                return Ok(NodeSelection {
                    node_id,
                    created_new: false,
                    candidates,
                });
            }
        }

        let node_id = self.nodes.len() as u32;
        self.nodes.push(DynamicNode {
            node_id,
            members: vec![(id, query.clone())],
        });
        self.frame_index.insert(id, node_id);
        self.last_id = Some(id);
        Ok(NodeSelection {
            node_id,
            created_new: true,
            candidates: Vec::new(),
        })
    }

    /// Total node count plus the distribution of members per node
    /// (member count -> number of nodes of that size).
    pub fn node_stats(&self) -> (usize, BTreeMap<usize, usize>) {
        let mut histogram = BTreeMap::new();
        for node in &self.nodes {
            *histogram.entry(node.members.len()).or_insert(0) += 1;
        }
        (self.nodes.len(), histogram)
    }

    /// JSON-serializable structure manifest (node ids and member frame ids).
    pub fn snapshot_manifest(&self) -> SnapshotManifest {
        SnapshotManifest {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeManifest {
                    node_id: n.node_id,
                    members: n.members.iter().map(|(fid, _)| fid.0).collect(),
                })
                .collect(),
        }
    }

    /// Descriptor blob accompanying the manifest: for each frame in ascending
    /// id order, a little-endian `u32` frame id followed by the descriptor's
    /// binary serialization.
    pub fn descriptor_blob(&self) -> Vec<u8> {
        let mut frames: Vec<(FrameId, &SharedLsgd)> = self
            .nodes
            .iter()
            .flat_map(|n| n.members.iter().map(|(fid, d)| (*fid, d)))
            .collect();
        frames.sort_by_key(|(fid, _)| *fid);
        let mut out = Vec::new();
        for (fid, descriptor) in frames {
            out.extend_from_slice(&fid.0.to_le_bytes());
            out.extend_from_slice(&descriptor.to_bytes());
        }
        out
    }

    /// Rebuilds a database from a manifest plus its descriptor blob.
    pub fn from_snapshot(manifest: &SnapshotManifest, blob: &[u8]) -> Result<Self> {
        let mut descriptors: BTreeMap<u32, SharedLsgd> = BTreeMap::new();
        let mut off = 0usize;
        while off < blob.len() {
            if blob.len() - off < 4 {
                return Err(Error::Input("truncated descriptor blob".into()));
            }
            let fid = u32::from_le_bytes(blob[off..off + 4].try_into().unwrap());
            off += 4;
            let rest = &blob[off..];
            let probe = Lsgd::from_bytes_prefix(rest)?;
            off += probe.byte_len();
            descriptors.insert(fid, SharedLsgd::new(probe));
        }

        let mut db = NodeDatabase::new();
        for (i, node) in manifest.nodes.iter().enumerate() {
            if node.node_id != i as u32 {
                return Err(Error::Input(format!(
                    "node ids must be consecutive from 0, got {} at position {i}",
                    node.node_id
                )));
            }
            if node.members.is_empty() {
                return Err(Error::Input(format!("node {} has no members", node.node_id)));
            }
            let mut members = Vec::with_capacity(node.members.len());
            for &fid in &node.members {
                let descriptor = descriptors.get(&fid).ok_or_else(|| {
                    Error::Input(format!("descriptor blob is missing frame {fid}"))
                })?;
                if db.frame_index.contains_key(&FrameId(fid)) {
                    return Err(Error::Input(format!(
                        "frame {fid} appears in more than one node"
                    )));
                }
                db.frame_index.insert(FrameId(fid), node.node_id);
                members.push((FrameId(fid), descriptor.clone()));
            }
            db.nodes.push(DynamicNode {
                node_id: node.node_id,
                members,
            });
        }
        db.last_id = db.frame_index.keys().next_back().copied();
        Ok(db)
    }
}

impl Lsgd {
    /// Decodes a descriptor from the start of `bytes`, ignoring trailing data.
    pub(crate) fn from_bytes_prefix(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Input("descriptor blob shorter than header".into()));
        }
        let m = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let need = 12 + m * n * crate::descriptor::BINS * 4;
        if bytes.len() < need {
            return Err(Error::Input("truncated descriptor record".into()));
        }
        Self::from_bytes(&bytes[..need])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub nodes: Vec<NodeManifest>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeManifest {
    pub node_id: u32,
    pub members: Vec<u32>,
}
