use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use geomm::dataio::{load_model, Embeddings};
use geomm::synthetic::{index_dictionary, planted_multilingual, planted_pair};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_geomm"));
    c.env("GEOMM_NUM_THREADS", "2");
    c
}

fn write_emb(path: &Path, e: &Embeddings) {
    let m = e.matrix();
    let mut s = format!("{} {}\n", e.len(), e.dim());
    for (j, w) in e.vocab().iter().enumerate() {
        s.push_str(w);
        for i in 0..e.dim() {
            write!(s, " {}", m[(i, j)]).unwrap();
        }
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

fn write_dict(path: &Path, pairs: &[(String, String)]) {
    let s: String = pairs.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    std::fs::write(path, s).unwrap();
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn planted() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let p = planted_pair(17, 10, 100);
        write_emb(&dir.path().join("src.vec"), &p.src);
        write_emb(&dir.path().join("tgt.vec"), &p.tgt);
        write_dict(&dir.path().join("train.dict"), &index_dictionary("s", "t", 0..80));
        write_dict(&dir.path().join("test.dict"), &index_dictionary("s", "t", 80..100));
        Fixture { dir }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self) -> Output {
        bin()
            .args(["train", "--src", "en", "--tgt", "it", "--lambda", "10,100"])
            .arg("--src-emb")
            .arg(self.p("src.vec"))
            .arg("--tgt-emb")
            .arg(self.p("tgt.vec"))
            .arg("--dict")
            .arg(self.p("train.dict"))
            .arg("--out")
            .arg(self.p("model.bin"))
            .output()
            .unwrap()
    }

    fn model_args(&self, cmd: &mut Command) {
        cmd.args(["--src", "en", "--tgt", "it"])
            .arg("--model")
            .arg(self.p("model.bin"))
            .arg("--src-emb")
            .arg(self.p("src.vec"))
            .arg("--tgt-emb")
            .arg(self.p("tgt.vec"));
    }
}

#[test]
fn train_then_evaluate_planted() {
    let f = Fixture::planted();
    let o = f.train();
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("lambda=10\n"), "{out}");
    assert!(out.contains("val_p1[10]=100.00"), "{out}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.p("model.bin.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 3);
    assert_eq!(load_model(f.p("model.bin")).unwrap().params.languages(), &["en", "it"]);

    for mode in ["csls", "nn"] {
        let mut c = bin();
        c.arg("evaluate-bli").args(["--mode", mode]).arg("--test-dict").arg(f.p("test.dict"));
        f.model_args(&mut c);
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        let out = stdout(&o);
        assert!(out.contains("p@1=100.00\n"), "{out}");
        assert!(out.contains("evaluated=20\n"), "{out}");
        assert!(stderr(&o).contains("manifest="));
    }
}

#[test]
fn translate_reports_oov_and_continues() {
    let f = Fixture::planted();
    assert!(f.train().status.success());
    let mut c = bin();
    c.args(["translate", "--topk", "3", "s85", "nosuchword", "s3"]);
    f.model_args(&mut c);
    let o = c.output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("s85=t85,")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("s3=t3,")), "{out}");
    assert!(stderr(&o).contains("oov=nosuchword"));

    let mut c = bin();
    c.args(["translate", "--space", "target_space", "--mode", "nn", "--topk", "1"]);
    f.model_args(&mut c);
    let mut child = c.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn().unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(b"s1 s2\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    assert_eq!(stdout(&o), "s1=t1\ns2=t2\n");
}

#[test]
fn empty_dictionary_is_a_data_error() {
    let f = Fixture::planted();
    std::fs::write(f.p("empty.dict"), "").unwrap();
    let o = bin()
        .arg("train")
        .arg("--src-emb")
        .arg(f.p("src.vec"))
        .arg("--tgt-emb")
        .arg(f.p("tgt.vec"))
        .arg("--dict")
        .arg(f.p("empty.dict"))
        .arg("--out")
        .arg(f.p("m.bin"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty.dict"), "{}", stderr(&o));
}

#[test]
fn usage_errors_and_missing_files() {
    let o = bin().args(["train", "--no-such-flag"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = bin().args(["train", "--lambda", "-3", "--src-emb", "a", "--tgt-emb", "b", "--dict", "c", "--out", "d"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin()
        .args(["train", "--src-emb", "/nonexistent/a", "--tgt-emb", "b", "--dict", "c", "--out", "d"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_language_is_a_data_error() {
    let f = Fixture::planted();
    assert!(f.train().status.success());
    let o = bin()
        .args(["translate", "--src", "xx", "--tgt", "it", "s1"])
        .arg("--model")
        .arg(f.p("model.bin"))
        .arg("--src-emb")
        .arg(f.p("src.vec"))
        .arg("--tgt-emb")
        .arg(f.p("tgt.vec"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("xx"));
}

#[test]
fn evaluate_sim_and_induce() {
    let f = Fixture::planted();
    assert!(f.train().status.success());
    std::fs::write(f.p("sim.txt"), "s1 t1 1.0\ns2 t2 0.9\ns3 t7 0.1\ns4 t9 0.0\n").unwrap();
    let mut c = bin();
    c.arg("evaluate-sim").arg("--pairs-file").arg(f.p("sim.txt"));
    f.model_args(&mut c);
    let o = c.output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("used=4\n"));

    let mut c = bin();
    c.args(["induce", "--vocab-cutoff", "50"]).arg("--out").arg(f.p("induced.dict"));
    f.model_args(&mut c);
    let o = c.output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("pairs=50\n"), "{}", stdout(&o));
    let text = std::fs::read_to_string(f.p("induced.dict")).unwrap();
    for line in text.lines() {
        let (s, t) = line.split_once('\t').unwrap();
        assert_eq!(s[1..], t[1..], "{line}");
    }
}

#[test]
fn bootstrap_command_logs_rounds() {
    let f = Fixture::planted();
    write_dict(&f.p("seed.dict"), &index_dictionary("s", "t", 0..30));
    let o = bin()
        .args(["bootstrap", "--lambda", "10", "--vocab-cutoff", "100"])
        .arg("--src-emb")
        .arg(f.p("src.vec"))
        .arg("--tgt-emb")
        .arg(f.p("tgt.vec"))
        .arg("--dict")
        .arg(f.p("seed.dict"))
        .arg("--out")
        .arg(f.p("boot.bin"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("round=1 dict_size="), "{}", stderr(&o));
    assert!(stdout(&o).contains("val_p1=100.00"));
}

#[test]
fn train_multi_and_disjoint_dicts() {
    let dir = tempfile::tempdir().unwrap();
    let m = planted_multilingual(23, &["a", "b", "c"], 8, 60);
    for (l, e) in m.languages.iter().zip(&m.embeddings) {
        write_emb(&dir.path().join(format!("{l}.vec")), e);
    }
    write_dict(&dir.path().join("ab.dict"), &index_dictionary("a", "b", 0..40));
    write_dict(&dir.path().join("bc.dict"), &index_dictionary("b", "c", 20..60));
    let o = bin()
        .args(["make-disjoint-pivot-dicts", "--seed", "4"])
        .arg("--dict1")
        .arg(dir.path().join("ab.dict"))
        .arg("--dict2")
        .arg(dir.path().join("bc.dict"))
        .arg("--out1")
        .arg(dir.path().join("ab2.dict"))
        .arg("--out2")
        .arg(dir.path().join("bc2.dict"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("shared_pivots=20\n"));

    std::fs::write(
        dir.path().join("edges.txt"),
        "# joint\na b a.vec b.vec ab2.dict\nb c b.vec c.vec bc2.dict\n",
    )
    .unwrap();
    let o = bin()
        .args(["train-multi", "--lambda", "10"])
        .arg("--pairs")
        .arg(dir.path().join("edges.txt"))
        .arg("--out")
        .arg(dir.path().join("multi.bin"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("languages=a,b,c\n"));

    write_dict(&dir.path().join("ac.dict"), &index_dictionary("a", "c", 0..60));
    let o = bin()
        .args(["evaluate-bli", "--src", "a", "--tgt", "c"])
        .arg("--model")
        .arg(dir.path().join("multi.bin"))
        .arg("--src-emb")
        .arg(dir.path().join("a.vec"))
        .arg("--tgt-emb")
        .arg(dir.path().join("c.vec"))
        .arg("--test-dict")
        .arg(dir.path().join("ac.dict"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    // A small planted system: the induced pivot gap costs at most a few words.
    let p1: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("p@1="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(p1 >= 95.0, "{}", stdout(&o));
}
