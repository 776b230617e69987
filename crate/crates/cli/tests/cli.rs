use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CASES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/cases");

fn iacloop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iacloop"))
        .args(args)
        .current_dir(dir)
        .env_remove("IACLOOP_API_KEY")
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn clean_template_exits_zero_silently() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("ok.json"),
        r#"{"Resources": {"Bucket": {"Type": "AWS::S3::Bucket"}}}"#,
    )
    .unwrap();
    let o = iacloop(dir.path(), &["lint", "ok.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "");
}

#[test]
fn one_error_exits_two_with_location() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("t.json"),
        "{\n  \"Resources\": {\n    \"Net\": {\n      \"Type\": \"AWS::EC2::Subnet\",\n      \"Properties\": {\n        \"VpcId\": \"vpc-1\",\n        \"CidrBlock\": \"10.0.0.0/24\",\n        \"AvailabilityZone\": {\"Fn::GetAZs\": \"\"}\n      }\n    }\n  }\n}\n",
    )
    .unwrap();
    let o = iacloop(dir.path(), &["lint", "t.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(
        stdout(&o),
        "E1015 {'Fn::GetAZs': ''} is not of type 'string'\nError location - t.json:8:29\n"
    );

    let o = iacloop(dir.path(), &["lint", "--format", "json", "t.json"]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["code"], "E1015");
    assert_eq!(v[0]["pointer"], "/Resources/Net/Properties/AvailabilityZone");
    assert_eq!(v[0]["line"], 8);
}

#[test]
fn invalid_json_and_missing_files() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.json"), "{\"a\": [1,}").unwrap();
    let o = iacloop(dir.path(), &["lint", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("line 1 column 10"), "{}", stdout(&o));

    let o = iacloop(dir.path(), &["lint", "absent.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(iacloop(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(iacloop(dir.path(), &["lint"]).status.code(), Some(1));
    assert_eq!(
        iacloop(
            dir.path(),
            &[
                "loop",
                "--prompt-file",
                "p.txt",
                "--backend",
                "carrier-pigeon",
                "--out",
                "t.json"
            ]
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn help_lists_commands_and_flags() {
    let dir = TempDir::new().unwrap();
    let o = iacloop(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let help = stdout(&o);
    for word in [
        "lint",
        "loop",
        "bench",
        "report",
        "--config",
        "--schemas",
        "--strict-types",
    ] {
        assert!(help.contains(word), "missing {word}");
    }
    let help = stdout(&iacloop(dir.path(), &["bench", "--help"]));
    for word in [
        "--trials",
        "--generations",
        "--iterations",
        "--seed",
        "--parallel",
        "--p-fix",
    ] {
        assert!(help.contains(word), "missing {word}");
    }
}

#[test]
fn synthetic_loop_writes_trace() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("vpc.txt"), "Create a VPC with two private subnets.\n").unwrap();
    let o = iacloop(
        dir.path(),
        &[
            "loop",
            "--prompt-file",
            "vpc.txt",
            "--backend",
            "synthetic",
            "--seed",
            "5",
            "--iterations",
            "4",
            "--out",
            "t.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(trace["case_id"], "vpc");
    let records = trace["records"].as_array().unwrap();
    assert_eq!(records.len(), 5);
    let errors: Vec<u64> = records.iter().map(|r| r["error_count"].as_u64().unwrap()).collect();
    assert!(errors[0] > 0);
    assert_eq!(stdout(&o).lines().count(), 5);
}

#[test]
fn scripted_loop_failure_keeps_partial_trace() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("p.txt"), "Make a bucket").unwrap();
    fs::create_dir(dir.path().join("script")).unwrap();
    fs::write(
        dir.path().join("script/000.txt"),
        r#"{"Resources": {"B": {"Type": "AWS::S3::Bucket", "Properties": {"BucketName": 5}}}}"#,
    )
    .unwrap();
    let o = iacloop(
        dir.path(),
        &[
            "loop",
            "--prompt-file",
            "p.txt",
            "--backend",
            "scripted",
            "--script-dir",
            "script",
            "--out",
            "t.json",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(trace["records"].as_array().unwrap().len(), 1);
    assert_eq!(trace["records"][0]["error_count"], 1);
}

#[test]
fn bench_then_report() {
    let dir = TempDir::new().unwrap();
    let cases = dir.path().join("cases");
    fs::create_dir(&cases).unwrap();
    for name in ["01_vpc_private_subnets_endpoint.txt", "02_s3_versioned_bucket.txt"] {
        fs::copy(Path::new(CASES).join(name), cases.join(name)).unwrap();
    }
    let o = iacloop(
        dir.path(),
        &[
            "bench",
            "--cases",
            "cases",
            "--backend",
            "synthetic",
            "--trials",
            "2",
            "--generations",
            "2",
            "--iterations",
            "3",
            "--seed",
            "9",
            "--out",
            "r.json",
            "--traces",
            "traces",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(result["trials"].as_array().unwrap().len(), 2);
    assert_eq!(result["stats"]["iterations"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("traces/trial0").is_dir());

    let o = iacloop(
        dir.path(),
        &[
            "report", "--in", "r.json", "--csv", "s.csv", "--svg", "s.svg", "--json", "s.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("iteration,mean_errors,std_errors,mean_warnings,std_warnings"));
    let svg = fs::read_to_string(dir.path().join("s.svg")).unwrap();
    assert_eq!(svg.matches("class=\"bar\"").count(), 4);
    assert!(dir.path().join("s.json").is_file());
}

#[test]
fn config_file_supplies_defaults_and_reports_positions() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("p.txt"), "Create a VPC").unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"loop": {"iterations": 2}, "synthetic": {"seed": 4}}"#,
    )
    .unwrap();
    let o = iacloop(
        dir.path(),
        &[
            "--config",
            "c.json",
            "loop",
            "--prompt-file",
            "p.txt",
            "--backend",
            "synthetic",
            "--out",
            "t.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);

    // flags win over the file
    let o = iacloop(
        dir.path(),
        &[
            "--config",
            "c.json",
            "loop",
            "--prompt-file",
            "p.txt",
            "--backend",
            "synthetic",
            "--iterations",
            "1",
            "--out",
            "t.json",
        ],
    );
    assert_eq!(stdout(&o).lines().count(), 2);

    fs::write(dir.path().join("bad.json"), "{\n  \"loop\": {\"iterations\": -1}\n}").unwrap();
    let o = iacloop(dir.path(), &["--config", "bad.json", "lint", "p.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.json:2:11: loop:"), "{}", stderr(&o));
}
