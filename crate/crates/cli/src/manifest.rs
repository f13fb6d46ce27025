//! Run manifests: every command writes one next to its outputs so a run can
//! be reproduced from the recorded configuration alone.

use std::path::Path;

use anyhow::Result;

/// FNV-1a 64-bit content hash, hex-encoded.
pub fn content_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub struct Manifest {
    pub command: String,
    pub config_toml: String,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = String::new();
        text.push_str(&format!("command = {:?}\n", self.command));
        text.push_str(&format!(
            "content_hash = {:?}\n",
            content_hash(&format!("{}\n{}", self.command, self.config_toml))
        ));
        if !self.seeds.is_empty() {
            let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
            text.push_str(&format!("seeds = [{}]\n", seeds.join(", ")));
        }
        let outputs: Vec<String> = self.outputs.iter().map(|o| format!("{o:?}")).collect();
        text.push_str(&format!("outputs = [{}]\n", outputs.join(", ")));
        text.push_str("\n[config]\n");
        text.push_str(&self.config_toml);
        std::fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }
}
