use delone_lab::bounds::BoundsReport;
use delone_lab::colouring::ColouredWindow;
use delone_lab::counterexample::{IdsOscillationReport, OscillationReport};
use delone_lab::ids::{
    BracketReport, ConvergenceReport, GrowthReport, LdReport, LifshitzReport, SubadditivityReport, TempleReport,
    WegnerReport,
};
use delone_lab::pointset::DeloneCertificate;
use delone_lab::runner::{preset, run, Command, PRESETS};
use delone_lab::spectrum::IdsCurve;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

fn shrink(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for (k, x) in map.iter_mut() {
                match k.as_str() {
                    "n_samples" => *x = Value::from(x.as_u64().unwrap().min(20)),
                    "n_boot" => *x = Value::from(20),
                    "reference_side" => *x = Value::from(128.0),
                    _ => shrink(x),
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(shrink),
        _ => {}
    }
}

fn round_trip<T: Serialize + DeserializeOwned>(text: &str) -> String {
    let parsed: T = serde_json::from_str(text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    let mut back = serde_json::to_string_pretty(&parsed).unwrap();
    back.push('\n');
    back
}

#[test]
fn every_json_artifact_parses_back_into_its_type() {
    let mut seen = 0;
    for name in PRESETS {
        let (command, mut config) = preset(name).unwrap();
        if command == Command::Lifshitz && name != "lifshitz-d1" {
            continue;
        }
        shrink(&mut config);
        let out = run(command, &config, 0).unwrap();
        for a in out.artifacts.iter().filter(|a| a.name.ends_with(".json")) {
            let text = a.contents.as_str();
            let back = match a.name.as_str() {
                "colouring.json" => round_trip::<ColouredWindow>(text),
                "delone.json" => round_trip::<DeloneCertificate>(text),
                "ids.json" => round_trip::<Vec<IdsCurve>>(text),
                "growth.json" => round_trip::<GrowthReport>(text),
                "convergence.json" => round_trip::<ConvergenceReport>(text),
                "bracketing.json" => round_trip::<Vec<BracketReport>>(text),
                "subadditivity.json" => round_trip::<Vec<SubadditivityReport>>(text),
                "temple.json" => round_trip::<Vec<TempleReport>>(text),
                "ld_rate.json" => round_trip::<LdReport>(text),
                "wegner.json" => round_trip::<Vec<WegnerReport>>(text),
                "lifshitz.json" | "lifshitz_control.json" => round_trip::<LifshitzReport>(text),
                "frequency.json" => round_trip::<OscillationReport>(text),
                "ids_oscillation.json" => round_trip::<IdsOscillationReport>(text),
                "bounds.json" => round_trip::<BoundsReport>(text),
                other => panic!("no type registered for {other}"),
            };
            assert_eq!(back, text, "{name}: {}", a.name);
            seen += 1;
        }
    }
    assert!(seen == 15, "only {seen} artifacts checked");
}
