use std::path::Path;
use std::process::{Command, Output};

use cnd_core::synth::{feed_xml, synthetic_articles};

fn run(data: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cnd"));
    cmd.arg("--data-dir").arg(data).args(args);
    for var in ["CND_DATA_DIR", "CND_EMBED_URL", "CND_EMBED_API_KEY", "CND_LLM_URL", "CND_LLM_API_KEY"] {
        cmd.env_remove(var);
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn ok(data: &Path, args: &[&str]) -> String {
    let out = run(data, args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(data: &Path, args: &[&str], env: &[(&str, &str)]) -> String {
    let out = run(data, args, env);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

#[test]
fn eval_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("r.txt"), (1..=15).map(|i| format!("p{i}\n")).collect::<String>()).unwrap();
    std::fs::write(d.join("rel.txt"), "p1\np2\np3\np5\np6\np7\np9\np10\np12\np14\n").unwrap();
    let ranked = d.join("r.txt");
    let relevant = d.join("rel.txt");
    let pk = |k: &str| {
        ok(
            d,
            &["eval", "pk", "--ranked", ranked.to_str().unwrap(), "--relevant", relevant.to_str().unwrap(), "--k", k],
        )
    };
    assert_eq!(pk("10").trim(), "P@10 = 0.8000");
    assert_eq!(pk("15").trim(), "P@15 = 0.6667");

    let ratings: String = [(9, 2), (6, 1), (8, 4), (7, 1), (10, 5)]
        .iter()
        .enumerate()
        .flat_map(|(t, (a, b))| {
            // Overall quality equals the shared criterion value.
            [("r1", a), ("r2", b)].map(|(r, v)| {
                let v = (*v as i64).clamp(1, 5);
                format!(
                    "{{\"rater_id\":\"{r}\",\"target_id\":\"t{t}\",\"fluency\":{v},\"accuracy\":{v},\"angle_quality\":{v}}}\n"
                )
            })
        })
        .collect();
    std::fs::write(d.join("ratings.ndjson"), ratings).unwrap();
    let icc = ok(d, &["eval", "icc", "--ratings", d.join("ratings.ndjson").to_str().unwrap()]);
    assert!(icc.starts_with("ICC(3,1) = ") && icc.contains("(5 targets, 2 raters)"), "{icc}");

    std::fs::write(d.join("pairs.txt"), "# x y\n1 1\n2 3\n3 2\n4 4\n").unwrap();
    let rho = ok(d, &["eval", "spearman", "--input", d.join("pairs.txt").to_str().unwrap()]);
    assert_eq!(rho.trim(), "spearman = 0.8000");

    std::fs::write(d.join("bad.ndjson"), "{\"rater_id\":\"r\",\"target_id\":\"t\",\"fluency\":9,\"accuracy\":1,\"angle_quality\":1}\n")
        .unwrap();
    let err = fails(d, &["eval", "icc", "--ratings", d.join("bad.ndjson").to_str().unwrap()], &[]);
    assert!(err.contains(":1:"), "{err}");
}

#[test]
fn ingest_and_partition() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&data, &["init"]);
    let mut articles = synthetic_articles(30, 4, 1.0);
    articles.sort_by(|a, b| a.published_date.cmp(&b.published_date));
    let cutoff = articles[10].published_date;
    let feed = tmp.path().join("feed.xml");
    std::fs::write(&feed, feed_xml(&articles)).unwrap();
    let out = ok(&data, &["ingest", "arxiv", "--input", feed.to_str().unwrap()]);
    assert!(out.contains("30 added"), "{out}");
    let out = ok(&data, &["ingest", "arxiv", "--input", feed.to_str().unwrap()]);
    assert!(out.contains("0 added, 30 replaced"), "{out}");

    let out = ok(&data, &["partition", "--cutoff", &cutoff.to_string()]);
    let before = articles.iter().filter(|a| a.published_date < cutoff).count();
    assert!(out.starts_with(&format!("{before} before")), "{out}");
    let read = |f: &str| std::fs::read_to_string(data.join(f)).unwrap();
    let b = read("partition_before.ids");
    let a = read("partition_after.ids");
    assert_eq!(b.lines().count() + a.lines().count(), 30);

    let err = fails(&data, &["ingest", "outlet", "--outlet", "nosuch", "--input", feed.to_str().unwrap()], &[]);
    assert!(err.starts_with("error:"), "{err}");
    let err = fails(&data, &["partition", "--cutoff", "2022-13-01"], &[]);
    assert!(err.contains("cutoff"), "{err}");
}

#[test]
fn http_provider_errors_hide_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&data, &["init"]);
    let feed = tmp.path().join("feed.xml");
    let articles = synthetic_articles(3, 1, 1.0);
    std::fs::write(&feed, feed_xml(&articles)).unwrap();
    ok(&data, &["ingest", "arxiv", "--input", feed.to_str().unwrap()]);
    let key = "sk-cli-secret-99";
    // The key is also planted in the URL so any echo of it would show.
    let url = format!("http://127.0.0.1:9/{key}");
    let err = fails(
        &data,
        &["angles", "--article", &articles[0].id],
        &[("CND_LLM_URL", &url), ("CND_LLM_API_KEY", key), ("CND_EMBED_URL", &url), ("CND_EMBED_API_KEY", key)],
    );
    assert!(!err.contains(key), "{err}");
    let err = fails(&data, &["embed", "--provider", "http"], &[]);
    assert!(err.contains("CND_EMBED_URL"), "{err}");
}

#[test]
fn serve_rejects_missing_data_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let err = fails(&tmp.path().join("missing"), &["serve", "--port", "0", "--providers", "stub"], &[]);
    assert!(err.contains("does not exist"), "{err}");
}
