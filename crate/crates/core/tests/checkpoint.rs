mod common;

use common::{bit_identical, checkpoint_models};
use dec_core::checkpoint::{
    check_pairing, checkpoint_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, load_pki_for,
    save_checkpoint, Model, ModelKind, FORMAT_VERSION, MAGIC,
};
use dec_core::Error;

#[test]
fn every_kind_round_trips_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let models = checkpoint_models();
    let kinds: Vec<ModelKind> = models.iter().map(Model::kind).collect();
    assert_eq!(
        kinds,
        [ModelKind::Mlp, ModelKind::ConvLstm, ModelKind::Encoder, ModelKind::Decoder, ModelKind::Pki]
    );
    for (i, model) in models.iter().enumerate() {
        assert!(model.params().step() > 0);
        let path = dir.path().join(format!("m{i}.ckpt"));
        let hash = save_checkpoint(model, &path).unwrap();
        let (loaded, again) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(hash, again);
        assert_eq!(&loaded, model);
        assert!(bit_identical(loaded.params(), model.params()));
        assert_eq!(encode_checkpoint(&loaded).unwrap(), std::fs::read(&path).unwrap());
    }
}

#[test]
fn header_layout() {
    let bytes = encode_checkpoint(&checkpoint_models().remove(1)).unwrap();
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
    assert_eq!(bytes[8], ModelKind::ConvLstm as u8);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let model = checkpoint_models().remove(0);
    let bytes = encode_checkpoint(&model).unwrap();
    for cut in [0, 3, 8, 20, bytes.len() / 2, bytes.len() - 1] {
        assert!(decode_checkpoint::<f64>(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_checkpoint::<f64>(&extra).is_err());

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(decode_checkpoint::<f64>(&magic), Err(Error::Decode(_))));

    let mut version = bytes.clone();
    version[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    assert!(matches!(
        decode_checkpoint::<f64>(&version),
        Err(Error::Version { found, .. }) if found == FORMAT_VERSION + 1
    ));

    let mut kind = bytes;
    kind[8] = 9;
    assert!(decode_checkpoint::<f64>(&kind).is_err());
}

#[test]
fn pki_pairing_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let models = checkpoint_models();
    let Model::Pki(pki) = &models[4] else { panic!("expected PKI") };
    let base_path = dir.path().join("base.ckpt");
    let other_path = dir.path().join("other.ckpt");
    let pki_path = dir.path().join("pki.ckpt");
    let base_hash = save_checkpoint(&models[0], &base_path).unwrap();
    save_checkpoint(&models[1], &other_path).unwrap();
    save_checkpoint(&models[4], &pki_path).unwrap();

    assert_eq!(pki.base_hash(), base_hash);
    assert_eq!(base_hash, checkpoint_hash(&std::fs::read(&base_path).unwrap()));
    check_pairing(pki, &base_hash).unwrap();
    let (loaded, base) = load_pki_for::<f64>(&pki_path, &base_path).unwrap();
    assert_eq!(&loaded, pki);
    assert_eq!(base, models[0]);

    assert!(matches!(load_pki_for::<f64>(&pki_path, &other_path), Err(Error::Pairing { .. })));
    assert!(matches!(check_pairing(pki, "0000"), Err(Error::Pairing { .. })));
    assert!(load_pki_for::<f64>(&base_path, &base_path).is_err());
}
