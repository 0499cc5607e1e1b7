mod common;

use fairmc::error::Error;
use fairmc::learner::LabeledChain;
use fairmc::model::{load_dataset, load_network};

#[test]
fn dataset_accepts_header_and_label_names() {
    let dir = tempfile::tempdir().unwrap();
    let net = common::echo_net();
    let path = dir.path().join("d.csv");
    std::fs::write(
        &path,
        "group,noise,label\n0, 0.25, no\n1,0.5,yes\n1,0.75,0\n",
    )
    .unwrap();
    let rows = load_dataset(&path, &net).unwrap();
    assert_eq!(
        rows,
        vec![
            (vec![0.0, 0.25], 0),
            (vec![1.0, 0.5], 1),
            (vec![1.0, 0.75], 0)
        ]
    );
}

#[test]
fn dataset_rejects_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let net = common::echo_net();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "0,0.1,1\n0,0.2\n").unwrap();
    assert!(load_dataset(&path, &net).is_err(), "short row");
    std::fs::write(&path, "0,0.1,maybe\n").unwrap();
    assert!(load_dataset(&path, &net).is_err(), "unknown label");
    std::fs::write(&path, "").unwrap();
    assert!(matches!(
        load_dataset(&path, &net),
        Err(Error::EmptyDataset)
    ));
}

#[test]
fn missing_files_name_the_path() {
    let err = load_network("does/not/exist.json").unwrap_err();
    assert!(err.to_string().contains("does/not/exist.json"));
}

#[test]
fn shipped_models_load() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    for name in [
        "echo_model.json",
        "biased_model.json",
        "recurrent_model.json",
    ] {
        load_network(root.join(name)).unwrap();
    }
    let net = load_network(root.join("biased_model.json")).unwrap();
    assert_eq!(net, common::biased_net());
    let rows = load_dataset(root.join("biased_train.csv"), &net).unwrap();
    assert_eq!(rows.len(), 2000);
}

#[test]
fn chain_text_rejects_bad_input() {
    for text in [
        "",
        "2\n0 start Start\n",
        "2\n0 start Start\n1 outcome y\n0 1 0.5 1\n1 1 1 0\n",
        "2\n0 start Start\n1 weird y\n0 1 1 1\n1 1 1 0\n",
        "2\n0 start Start\n1 outcome y\n0 7 1 1\n1 1 1 0\n",
    ] {
        assert!(LabeledChain::parse(text).is_err(), "{text:?}");
    }
    let ok = LabeledChain::parse("# c\n2\n0 start Start\n1 outcome has space\n0 1 1 3\n1 1 1 0\n")
        .unwrap();
    assert_eq!(ok.states[1].0, "has space");
    assert_eq!(LabeledChain::parse(&ok.to_text()).unwrap(), ok);
}
