use fragwave::config::{parse_grid, MeasureSpec, RunConfig};
use fragwave::{run, RunOptions};

fn parse(json: &str) -> RunConfig {
    serde_json::from_str(json).unwrap()
}

fn martingale(replicates: &str) -> String {
    format!(
        r#"{{"name":"v","master_seed":1,"experiments":[{{"name":"m","kind":"martingale",
        "measure":{{"kind":"uniform_binary"}},"p":[1.0],"t":[1.0]{replicates}}}]}}"#
    )
}

#[test]
fn zero_replicates_is_rejected_with_a_field_path() {
    let err = parse(&martingale(r#","replicates":0"#))
        .validate()
        .unwrap_err();
    assert_eq!(err.path, "experiments[0].replicates");
    let err = parse(&martingale("")).validate().unwrap_err();
    assert_eq!(err.path, "experiments[0].replicates");
    assert!(err.to_string().contains("martingale"));
    assert!(run(
        &parse(&martingale(r#","replicates":0"#)),
        &RunOptions::default()
    )
    .is_err());
    parse(&martingale(r#","replicates":3"#)).validate().unwrap();
}

#[test]
fn unknown_fields_and_kinds_do_not_parse() {
    let typo = martingale(r#","replicates":3,"replicate":3"#);
    assert!(serde_json::from_str::<RunConfig>(&typo).is_err());
    let kind = martingale(r#","replicates":3"#).replace("martingale", "martingales");
    assert!(serde_json::from_str::<RunConfig>(&kind).is_err());
}

#[test]
fn kind_specific_requirements() {
    let cases = [
        (
            r#""kind":"simulate","replicates":2"#,
            "experiments[0].horizon",
        ),
        (
            r#""kind":"simulate","horizon":2,"replicates":2,"window":[1,3]"#,
            "experiments[0].window",
        ),
        (
            r#""kind":"line","p":[1],"z":[2,1],"replicates":2"#,
            "experiments[0].z",
        ),
        (
            r#""kind":"lln","p":[0],"z":[1],"replicates":2"#,
            "experiments[0].functional",
        ),
        (
            r#""kind":"lln","p":[0],"z":[1],"replicates":2,"functional":{"name":"exp_eps"}"#,
            "experiments[0].functional",
        ),
        (
            r#""kind":"wave","p":[1],"replicates":2"#,
            "experiments[0].delta",
        ),
        (r#""kind":"speed""#, "experiments[0].c"),
        (
            r#""kind":"many_to_one","p":[0],"t":[1],"g":["square"],"replicates":2"#,
            "experiments[0].g[0]",
        ),
        (r#""kind":"exponents","p":["q_bar"]"#, "experiments[0].p[0]"),
        (
            r#""kind":"exponents","p_grid":"0:1""#,
            "experiments[0].p_grid",
        ),
        (
            r#""kind":"exponents","checks":[{"metric":"p_bar"}]"#,
            "experiments[0].checks[0]",
        ),
        (
            r#""kind":"exponents","checks":[{"metric":"p_bar","rel":0.1}]"#,
            "experiments[0].checks[0].target",
        ),
    ];
    for (body, path) in cases {
        let json = format!(
            r#"{{"name":"v","master_seed":1,"experiments":[{{"name":"e","measure":{{"kind":"uniform_binary"}},{body}}}]}}"#
        );
        let err = parse(&json).validate().unwrap_err();
        assert_eq!(err.path, path, "{body}");
    }
}

#[test]
fn run_level_validation() {
    let empty = parse(r#"{"name":"v","master_seed":1,"experiments":[]}"#);
    assert_eq!(empty.validate().unwrap_err().path, "experiments");
    let body = r#"{"name":"e","kind":"exponents","measure":{"kind":"uniform_binary"}}"#;
    let dup = parse(&format!(
        r#"{{"name":"v","master_seed":1,"experiments":[{body},{body}]}}"#
    ));
    assert_eq!(dup.validate().unwrap_err().path, "experiments[1].name");
    let workers = parse(&format!(
        r#"{{"name":"v","master_seed":1,"workers":0,"experiments":[{body}]}}"#
    ));
    assert_eq!(workers.validate().unwrap_err().path, "workers");
}

#[test]
fn invalid_measures_are_rejected() {
    let json = r#"{"name":"v","master_seed":1,"experiments":[{"name":"e","kind":"exponents",
        "measure":{"kind":"discrete_atoms","atoms":[[1.0,[0.5,0.4]]]}}]}"#;
    assert_eq!(
        parse(json).validate().unwrap_err().path,
        "experiments[0].measure"
    );
    assert!(MeasureSpec::parse("uniform").is_err());
    let inline =
        MeasureSpec::parse(r#"{"kind":"discrete_atoms","atoms":[[2.0,[0.5,0.5]]]}"#).unwrap();
    assert!(inline.build().is_ok());
}

#[test]
fn p_grids() {
    assert_eq!(
        parse_grid("0:1:0.25").unwrap(),
        vec![0.0, 0.25, 0.5, 0.75, 1.0]
    );
    assert_eq!(parse_grid("-1:-1:0.5").unwrap(), vec![-1.0]);
    assert_eq!(parse_grid("0:1:0.3").unwrap().len(), 4);
    for bad in ["1:0:0.1", "0:1:0", "0:1", "a:1:0.1", "0:1e9:1e-3"] {
        assert!(parse_grid(bad).is_err(), "{bad}");
    }
}

#[test]
fn checked_in_configs_validate() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            RunConfig::load(&path).unwrap();
            n += 1;
        }
    }
    assert!(n >= 9);
}
