//! The committed contract pack must stay in lockstep with the built-in
//! definitions: regenerate it with
//! `cargo run -p contractbench-cli -- export-contracts --out packs/contracts.json`
//! whenever this test fails.

use std::path::PathBuf;

use contractbench::contract::{
    load_contract_pack, pack_digest, pack_to_string, ContractPack, CONTRACT_PACK_VERSION,
};
use contractbench::standard::standard_contract_pack;

fn committed_pack_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../packs/contracts.json")
}

#[test]
fn committed_pack_matches_the_built_in_definitions() {
    let committed = std::fs::read_to_string(committed_pack_path()).unwrap();
    assert_eq!(
        committed,
        pack_to_string(&standard_contract_pack()),
        "packs/contracts.json is stale; regenerate it with export-contracts"
    );
}

#[test]
fn committed_pack_loads_and_keeps_its_canonical_digest() {
    let bytes = std::fs::read(committed_pack_path()).unwrap();
    let tools = load_contract_pack(&bytes).unwrap();
    assert_eq!(tools.len(), 7);
    let built_in = standard_contract_pack();
    assert_eq!(tools, built_in.tools);
    // Canonical digest over the pack contents, independent of file formatting.
    let reloaded = ContractPack {
        version: CONTRACT_PACK_VERSION,
        tools,
    };
    assert_eq!(pack_digest(&reloaded), pack_digest(&built_in));
}
