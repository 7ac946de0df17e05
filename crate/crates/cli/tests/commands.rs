use std::path::{Path, PathBuf};

use clap::Parser;
use graphchain_cli::{run, Cli, CliError};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn exec(args: &[&str]) -> Result<String, CliError> {
    let cli = Cli::try_parse_from(std::iter::once("graphchain").chain(args.iter().copied())).unwrap();
    let mut out = Vec::new();
    run(cli, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn seq_prints_prefixed_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "p.graph", "graph p\nnode 0 C\nnode 1 O\nnode 2 N\nedge 0 1\nedge 1 2\n");
    let out = exec(&["seq", "--graph", &g, "--l", "1"]).unwrap();
    assert_eq!(out, "base: C O\nbase: O C\nbase: O N\nbase: N O\n");
    let tri = fixture("molecule.graph");
    let out = exec(&["seq", "--graph", tri.to_str().unwrap(), "--l", "2", "--minimize", "--super"]).unwrap();
    assert!(out.lines().all(|l| l.starts_with("base: ") || l.starts_with("super: ")));
    assert!(!out.contains("super: "), "single super-node has no paths");
}

#[test]
fn loss_prints_breakdown_and_matching() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "c.chain", "load_graph\nnode_count\nreport\n");
    let out = exec(&["loss", "--chain", &c, "--ref", &c]).unwrap();
    assert_eq!(out, "X: 0\nY: 0\nalpha: 1\ntotal: 0\nmatching: 0->0 1->1 2->2\n");
    let r = write(dir.path(), "r.chain", "load_graph\nreport\n");
    let out = exec(&["loss", "--chain", &c, "--ref", &r, "--alpha", "2"]).unwrap();
    assert!(out.contains("alpha: 2\n"));
    assert!(matches!(exec(&["loss", "--chain", &c, "--ref", &r, "--alpha", "0"]), Err(CliError::Usage(_))));
}

#[test]
fn plan_is_deterministic_and_traced() {
    let g = fixture("social.graph");
    let args = ["plan", "--question", "how many connected components are there", "--graph", g.to_str().unwrap(), "--seed", "42", "--r", "8"];
    let a = exec(&args).unwrap();
    assert_eq!(a, exec(&args).unwrap());
    assert!(a.lines().any(|l| l.starts_with("# step 0 chose ")));

    let exact = exec(&[
        "plan",
        "--question",
        "how many connected components are there",
        "--graph",
        g.to_str().unwrap(),
        "--exhaustive",
        "--reference-apis",
        "--k",
        "4",
        "--max-len",
        "5",
    ])
    .unwrap();
    assert!(exact.starts_with("load_graph\nconnected_components\nreport\n"), "{exact}");
}

#[test]
fn index_build_query_audit() {
    let dir = tempfile::tempdir().unwrap();
    let mut vectors = String::from("6 2\n");
    for (x, y) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (5.0, 5.0), (5.0, 6.0)] {
        vectors.push_str(&format!("{x} {y}\n"));
    }
    let v = write(dir.path(), "v.txt", &vectors);
    let q = write(dir.path(), "q.txt", "2 2\n0.1 0.1\n5.0 5.9\n");
    let idx = dir.path().join("i.txt");
    let out = exec(&["index", "build", "--vectors", &v, "--tau", "0.1", "--out", idx.to_str().unwrap()]).unwrap();
    assert!(out.starts_with("built 6 nodes"));
    assert!(std::fs::read_to_string(&idx).unwrap().starts_with("taumg 6 2 0.1 "));
    let out = exec(&["index", "query", "--index", idx.to_str().unwrap(), "--vectors", &v, "--query", &q, "--k", "1", "--beam", "4"]).unwrap();
    let ids: Vec<&str> = out.lines().map(|l| l.split('\t').nth(1).unwrap().split(':').next().unwrap()).collect();
    assert_eq!(ids, vec!["0", "5"]);
    let out = exec(&["index", "audit", "--index", idx.to_str().unwrap(), "--vectors", &v]).unwrap();
    assert!(out.ends_with("sound\n"), "{out}");
}

#[test]
fn audit_flags_a_tampered_index() {
    let dir = tempfile::tempdir().unwrap();
    let v = write(dir.path(), "v.txt", "3 1\n0\n1\n2\n");
    let idx = dir.path().join("i.txt");
    exec(&["index", "build", "--vectors", &v, "--tau", "0", "--out", idx.to_str().unwrap()]).unwrap();
    let text = std::fs::read_to_string(&idx).unwrap();
    // 0 -> 2 is occluded by 1 on a line
    let tampered: String = text.lines().map(|l| if l == "edges 0 1" { "edges 0 1 2".to_string() } else { l.to_string() }).collect::<Vec<_>>().join("\n");
    assert_ne!(tampered.trim(), text.trim());
    std::fs::write(&idx, tampered + "\n").unwrap();
    let err = exec(&["index", "audit", "--index", idx.to_str().unwrap(), "--vectors", &v]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn apis_list_add_retrieve() {
    let dir = tempfile::tempdir().unwrap();
    let out = exec(&["apis", "list"]).unwrap();
    assert!(out.lines().any(|l| l.starts_with("connected_components\tgraph -> value\tbuiltin:connected_components")));

    let reg = write(dir.path(), "reg.txt", graphchain_core::registry::BUILTIN_REGISTRY);
    exec(&["apis", "add", "--registry", &reg, "--id", "triangle_count", "--desc", "count triangles in the graph", "--in", "graph", "--out", "value", "--exec", "external:triangles"]).unwrap();
    let dup = exec(&["apis", "add", "--registry", &reg, "--id", "triangle_count", "--desc", "again", "--in", "graph", "--out", "value", "--exec", "external:t"]);
    assert!(matches!(dup, Err(CliError::Registry(_))));
    let out = exec(&["apis", "retrieve", "--registry", &reg, "--question", "count triangles in the graph", "--k", "2"]).unwrap();
    assert!(out.starts_with("triangle_count\t"), "{out}");
    assert_eq!(out.lines().count(), 2);
}
