//! `rhino kb update`: refresh the compact CSV catalog snapshot from a STIX
//! 2.1 enterprise-attack bundle.

use std::path::Path;

use anyhow::anyhow;

use rhino_core::attack_kb::AttackCatalog;

use super::{CmdResult, Failure};

pub fn update(stix: &Path, out: &Path) -> CmdResult {
    let catalog = AttackCatalog::load_stix(stix)
        .map_err(|e| Failure::from(anyhow!("loading {}: {e}", stix.display())))?;
    catalog
        .write_csv(out)
        .map_err(|e| Failure::from(anyhow!("writing {}: {e}", out.display())))?;
    let revoked = catalog.techniques.values().filter(|t| t.revoked).count();
    println!(
        "wrote {} techniques ({} revoked) from ATT&CK {} to {}",
        catalog.techniques.len(),
        revoked,
        catalog.version,
        out.display()
    );
    Ok(())
}
