use std::io::Write;
use std::path::PathBuf;

use parashard_core::config::{load_config, parse_config, BlockKind, Mode};
use parashard_core::Error;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"))
}

#[test]
fn shipped_configs_load() {
    let expected = [
        ("llama7b", BlockKind::Transformer, 32, 4096),
        ("llama1b", BlockKind::Transformer, 16, 2048),
        ("mamba7b", BlockKind::Mamba2, 40, 4096),
        ("mamba1b", BlockKind::Mamba2, 16, 2048),
    ];
    for (name, kind, layers, d) in expected {
        let set = load_config(shipped(name)).unwrap();
        assert_eq!(set.model.kind(), kind, "{name}");
        assert_eq!((set.model.layers, set.model.d), (layers, d), "{name}");
        assert_eq!(set.workload.mode, Mode::Training);
        assert_eq!(set.workload.global_batch * set.workload.s, 4_194_304);
        assert_eq!(set.cluster.world, 8);
        assert_eq!(set.cluster.mem_capacity, 60_000_000_000);
        assert_eq!(set.cluster.cube_peak, 378.88e12);
    }
    let m = load_config(shipped("mamba7b")).unwrap().model;
    let x = m.mamba().unwrap();
    assert_eq!((x.d_inner, x.h, x.p, x.n, x.ngroups, x.l), (8192, 128, 64, 128, 8, 64));
}

#[test]
fn json_round_trip() {
    for name in ["llama7b", "mamba1b"] {
        let set = load_config(shipped(name)).unwrap();
        let again = parse_config(&set.to_json()).unwrap();
        assert_eq!(again, set);
    }
}

#[test]
fn temp_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    assert!(matches!(load_config(&missing), Err(Error::Io { .. })));

    let text = std::fs::read_to_string(shipped("llama1b")).unwrap();
    let broken = text.replacen("\"layers\": 16,", "\"layers\": 16,\n    \"heads\": 3,", 1);
    let path = dir.path().join("broken.json");
    std::fs::File::create(&path).unwrap().write_all(broken.as_bytes()).unwrap();
    match load_config(&path) {
        Err(Error::Parse { path: p, line, .. }) => {
            assert_eq!(p, path);
            assert!(line > 1);
        }
        other => panic!("{other:?}"),
    }

    let zero = text.replacen("\"world\": 8", "\"world\": 0", 1);
    assert!(matches!(parse_config(&zero), Err(Error::Invariant { .. })));
    let odd = text.replacen("\"a\": 32", "\"a\": 30", 1);
    assert!(parse_config(&odd).is_err());
}
