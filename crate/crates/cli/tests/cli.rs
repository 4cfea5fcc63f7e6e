use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn erpchat(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_erpchat"));
    cmd.args(args).env_remove("ERPCHAT_CONFIG").env("RUST_LOG", "off");
    cmd
}

fn run_with_stdin(mut cmd: Command, input: &str) -> Output {
    let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

#[test]
fn schema_render_lists_every_table() {
    let output = erpchat(&["schema", "render"]).output().unwrap();
    assert!(output.status.success());
    let text = stdout(&output);
    for table in ["T_A", "T_B", "T_C", "T_D", "T_E", "T_F", "T_G"] {
        assert!(text.contains(table), "{table} missing");
    }

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("schema.md");
    assert!(erpchat(&["schema", "render", "--out", out.to_str().unwrap()]).status().unwrap().success());
    assert_eq!(std::fs::read_to_string(out).unwrap(), text);
}

#[test]
fn sql_check_reports_each_statement() {
    let batch = "\"SELECT PartNumber FROM T_A\"\n{\"sql\": \"DROP TABLE T_A\"}\n\n\"PRAGMA writable_schema = 1\"\n";
    let output = run_with_stdin(erpchat(&["sql", "check", "-", "--batch"]), batch);
    assert!(output.status.success());
    let records: Vec<serde_json::Value> = stdout(&output).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 3);
    assert_eq!(records[0]["accepted"], true);
    assert_eq!(records[0]["tables"], serde_json::json!(["T_A"]));
    assert_eq!((records[1]["accepted"].clone(), records[2]["accepted"].clone()), (false.into(), false.into()));
    assert!(records[1]["message"].as_str().unwrap().len() > 0);
    assert!(String::from_utf8_lossy(&output.stderr).contains("1 accepted, 2 rejected"));

    let strict = run_with_stdin(erpchat(&["sql", "check", "-", "--batch", "--expect", "reject"]), batch);
    assert_eq!(strict.status.code(), Some(1));
    let all_bad = run_with_stdin(erpchat(&["sql", "check", "-", "--expect", "reject"]), "UPDATE T_A SET Status = 'X'");
    assert!(all_bad.status.success());
}

#[test]
fn sql_check_honours_dialect() {
    let top = "SELECT TOP 3 [PartNumber] FROM T_A";
    let mssql = run_with_stdin(erpchat(&["sql", "check", "-", "--dialect", "mssql", "--expect", "accept"]), top);
    assert!(mssql.status.success(), "{}", stdout(&mssql));
    let unknown = run_with_stdin(erpchat(&["sql", "check", "-", "--dialect", "oracle"]), top);
    assert!(!unknown.status.success());
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown dialect"));
}

fn write_script(dir: &Path, files: &[(&str, &str)]) {
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, text).unwrap();
    }
}

#[test]
fn ask_prints_each_step_then_the_reply() {
    let dir = tempfile::tempdir().unwrap();
    write_script(
        dir.path(),
        &[
            ("dialogue/01.md", "```json\n{\"decision\": \"proceed\", \"normalized_intent\": \"count active parts\", \"reason\": \"clear\"}\n```"),
            ("dialogue/02.md", "There are 21 active parts."),
            ("reasoner/01.md", "```sql\nSELECT COUNT(*) FROM T_A WHERE Statuss = 'ACTIVE'\n```"),
            ("reasoner/02.md", "```sql\nSELECT COUNT(*) AS active FROM T_A WHERE Status = 'ACTIVE'\n```"),
            ("critic/01.md", "```json\n{\"decision\": \"approved\", \"issues\": []}\n```"),
        ],
    );
    let output = erpchat(&["ask", "how many active parts?"])
        .env("ERPCHAT_LLM__BACKEND", "scripted")
        .env("ERPCHAT_LLM__SCRIPT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = stdout(&output);
    let kinds: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with('['))
        .map(|l| l.split_whitespace().nth(1).unwrap())
        .collect();
    assert_eq!(
        kinds,
        ["intent_assessed", "sql_attempt", "execution_result", "sql_attempt", "execution_result", "critique", "final_sql", "answer"]
    );
    assert!(text.contains("no such column"), "{text}");
    assert!(text.trim_end().ends_with("There are 21 active parts."), "{text}");

    let json = erpchat(&["ask", "how many active parts?", "--json"])
        .env("ERPCHAT_LLM__BACKEND", "scripted")
        .env("ERPCHAT_LLM__SCRIPT_DIR", dir.path())
        .output()
        .unwrap();
    let events: Vec<serde_json::Value> = stdout(&json).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events.len(), 8);
    assert!(events.iter().enumerate().all(|(i, e)| e["seq"] == i as u64));
}

#[test]
fn bad_configuration_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[agent]\nn_reasoner_attempts = 0\n").unwrap();
    let output = erpchat(&["--config", path.to_str().unwrap(), "schema", "render"]).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error: loading configuration"));
}

fn workspace_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn bundled_script_answers_with_the_example_config() {
    let config = workspace_file("config/erpchat.toml");
    let storage = tempfile::tempdir().unwrap();
    let output = erpchat(&["--config", config.to_str().unwrap(), "ask", "How many active parts do we have?"])
        .env("ERPCHAT_LLM__BACKEND", "scripted")
        .env("ERPCHAT_LLM__SCRIPT_DIR", workspace_file("fixtures/scripts/happy"))
        .env("ERPCHAT_SERVICE__STORAGE_DIR", storage.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = stdout(&output);
    assert!(text.contains("final_sql"), "{text}");
    assert!(text.trim_end().ends_with("There are 21 active parts in the catalogue."), "{text}");
}

#[test]
fn example_models_file_loads() {
    let entries = erpchat_core::config::load_models(&workspace_file("config/models.toml")).unwrap();
    let labels: Vec<&str> = entries.iter().map(|e| e.label.as_str()).collect();
    assert_eq!(labels, ["Qwen 2.5 32B Q4", "Devstral 24B Q4", "Llama 3.1 8B FP16"]);
    assert_eq!(entries[1].roles["reasoner"].temperature, Some(0.1));
}

#[test]
fn eval_run_renders_the_accuracy_table() {
    let dir = tempfile::tempdir().unwrap();
    write_script(
        &dir.path().join("always-count"),
        &[
            ("dialogue/repeat.md", "```json\n{\"decision\": \"proceed\", \"normalized_intent\": \"count active parts\", \"reason\": \"clear\"}\n```"),
            ("reasoner/repeat.md", "```sql\nSELECT COUNT(*) FROM T_A WHERE Status = 'ACTIVE'\n```"),
            ("critic/repeat.md", "```json\n{\"decision\": \"approved\", \"issues\": []}\n```"),
        ],
    );
    write_script(dir.path(), &[("models.toml", "[[model]]\nlabel = \"counter\"\nscript_dir = \"always-count\"\n")]);
    let report = dir.path().join("report.md");
    let verdicts = dir.path().join("verdicts.json");
    let models = dir.path().join("models.toml");
    let status = erpchat(&[
        "eval",
        "run",
        "--models",
        models.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
        "--json",
        verdicts.to_str().unwrap(),
    ])
    .status()
    .unwrap();
    assert!(status.success());
    let table = std::fs::read_to_string(report).unwrap();
    assert!(table.starts_with("| Model | 1 | 2 |"), "{table}");
    assert!(table.contains(&format!("| counter | ✓ |{} 1/11 |", " ✗ |".repeat(10))), "{table}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(verdicts).unwrap()).unwrap();
    assert_eq!(json["models"][0]["verdicts"].as_array().unwrap().len(), 11);
}
