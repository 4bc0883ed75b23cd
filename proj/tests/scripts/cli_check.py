#!/usr/bin/env python3
"""End-to-end checks of the infersched command line."""
import csv
import json
import os
import subprocess
import sys
import tempfile

BIN = os.path.abspath(sys.argv[1])
failures = []


def run(*args, env=None, cwd=None):
    e = dict(os.environ)
    e.pop("INFERSCHED_SEED", None)
    if env:
        e.update(env)
    p = subprocess.run([BIN, *args], capture_output=True, text=True, env=e, cwd=cwd)
    return p.returncode, p.stdout, p.stderr


def check(name, ok, detail=""):
    print(("ok   " if ok else "FAIL ") + name + (f"  ({detail})" if detail and not ok else ""))
    if not ok:
        failures.append(name)


def load(path):
    with open(path) as f:
        return json.load(f)


with tempfile.TemporaryDirectory() as tmp:
    os.chdir(tmp)

    rc, out, err = run("simulate", "--preset", "sarathi", "--workload", "fixed:I=512,O=32,W=1024",
                       "--M", "100000", "--out", "sar")
    m = load("sar/metrics.json") if rc == 0 else {}
    check("simulate writes metrics", rc == 0 and "preemption_count" in m and "tpot_s" in m, err)
    check("simulate writes schedule.csv", os.path.exists("sar/schedule.csv"))

    rc, _, err = run("--config", "sar/config.json", "--out", "x")
    check("--config cannot take extra flags", rc == 1, err)
    with open("sar/config.json") as f:
        cfg = json.load(f)
    cfg["out_dir"] = "rerun"
    with open("rerun.json", "w") as f:
        json.dump(cfg, f)
    rc, _, err = run("--config", "rerun.json")
    same = rc == 0 and load("rerun/metrics.json") == m
    check("--config rerun reproduces metrics", same, err)

    rc, _, err = run("simulate", "--preset", "vllm", "--workload", "fixed:I=512,O=512,W=512", "--M", "20000",
                     "--what-if", "infinite-m", "--out", "inf")
    check("infinite-m what-if has no preemptions",
          rc == 0 and load("inf/metrics.json")["preemption_count"] == 0, err)

    rc, _, err = run("simulate", "--preset", "vllm-rank-o", "--workload", "fixed:I=4,O=4,W=4", "--out", "h")
    check("rank-o needs --hypothetical", rc == 1 and "hypothetical" in err, err)
    rc, _, err = run("simulate", "--preset", "vllm-rank-o", "--hypothetical", "--workload", "fixed:I=4,O=4,W=4",
                     "--out", "h")
    check("rank-o runs with --hypothetical", rc == 0, err)

    rc, _, err = run("simulate", "--preset", "nonsense", "--workload", "fixed:I=4,O=4,W=4", "--out", "u")
    check("unknown preset is a validation error", rc == 1 and "nonsense" in err, err)
    rc, _, _ = run("simulate", "--preset", "vllm", "--workload", "fixed:I=0,O=4,W=4", "--out", "u")
    check("I=0 is a validation error", rc == 1)
    rc, _, _ = run("simulate", "--bogus-flag")
    check("unknown flag is a parse error", rc == 1)
    rc, _, err = run("simulate", "--preset", "vllm", "--workload", "fixed:I=4,O=4,W=4",
                     "--out", "/proc/infersched/denied")
    check("unwritable output is a runtime error", rc == 2, err)

    rc, _, err = run("simulate", "--preset", "vllm", "--workload", "hetero:groups=LILO+SISO,W=8",
                     "--out", "env", env={"INFERSCHED_SEED": "31"})
    check("INFERSCHED_SEED is used", rc == 0 and load("env/config.json")["seed"] == 31, err)
    rc, _, err = run("simulate", "--preset", "vllm", "--workload", "hetero:groups=LILO+SISO,W=8",
                     "--out", "env2", env={"INFERSCHED_SEED": "thirty"})
    check("bad INFERSCHED_SEED is rejected", rc == 1, err)

    rc, _, err = run("sweep", "--presets", "vllm,sarathi", "--I", "1,1,2", "--O", "4", "--W", "4",
                     "--M", "100000", "--out", "sw")
    rows = list(csv.DictReader(open("sw/sweep.csv"))) if rc == 0 else []
    check("sweep dedups duplicate cells", rc == 0 and len(rows) == 4, err)
    check("sweep rows are ok", all(r["status"] == "ok" for r in rows))
    rc, _, _ = run("sweep", "--presets", "vllm", "--I", "", "--O", "4", "--W", "4", "--out", "sw2")
    check("empty sweep axis is a validation error", rc == 1)

    rc, _, err = run("profile-synth", "--out", "prof")
    check("profile-synth", rc == 0, err)
    profiles = sorted(os.path.join("prof", f) for f in os.listdir("prof") if f.endswith(".csv"))
    rc, _, err = run("calibrate", "--profile", *profiles, "--out", "cal")
    model = load("cal/model.json") if rc == 0 else {"classes": []}
    check("calibrate fits every class with R^2 >= 0.96",
          rc == 0 and len(model["classes"]) == 3 and all(c["r_squared"] >= 0.96 for c in model["classes"]), err)
    rc, _, err = run("simulate", "--preset", "vllm", "--workload", "fixed:I=64,O=8,W=8", "--cost-model",
                     "cal/model.json", "--out", "cm1")
    rc2, _, _ = run("simulate", "--preset", "vllm", "--workload", "fixed:I=64,O=8,W=8", "--cost-model",
                    "cal/model.json", "--out", "cm2")
    check("reloaded model gives identical results",
          rc == 0 and rc2 == 0 and load("cm1/metrics.json") == load("cm2/metrics.json"), err)

    with open("one.csv", "w") as f:
        lines = open(profiles[0]).read().splitlines()
        f.write("\n".join(lines[:2]) + "\n")
    rc, _, err = run("calibrate", "--profile", "non_attention=one.csv", "--out", "cal1")
    check("calibrate with one row is rejected", rc == 1, err)

    rc, out, err = run("csp", "solve", "--workload", "fixed:I=4,O=4,W=4", "--M", "auto", "--compare-pf",
                       "--out", "cs")
    sol = load("cs/solution.json") if rc == 0 else {}
    check("csp solve preempts at I=4", rc == 0 and sol.get("preemptions", 0) > 0, err)
    check("best PF schedule is slower",
          rc == 0 and sol["best_preemption_free_s"] > sol["objective_s"] * (1 + 1e-9))

    rc, _, err = run("csp", "export", "--workload", "fixed:I=4,O=4,W=4", "--M", "auto", "--out", "lp")
    text = open("lp/instance.lp").read() if rc == 0 else ""
    check("csp export writes an LP file",
          rc == 0 and all(k in text for k in ("Minimize", "Subject To", "Bounds", "End")), err)

    with open("heavy.csv", "w") as f:
        f.write("request_id,arrival_s,input_tokens,output_tokens\n"
                "a,0,6,3\nb,0,11,4\nc,0,9,2\nd,0,4,8\n")
    rc, out, err = run("csp", "check", "--workload", "trace:path=heavy.csv", "--M", "22", "--against", "vllm",
                       "--factor", "0.9", "--out", "chk")
    check("existence query finds a 10% better schedule", rc == 0 and out.strip().endswith("true"), out + err)

    rc, _, err = run("csp", "solve", "--workload", "fixed:I=64,O=64,W=64", "--out", "big")
    check("oversized exact solve is refused", rc == 1 and "export" in err, err)

    rc, _, err = run("analyze", "roofline", "--op", "decode-attn", "--c", "1", "--m", "100000", "--out", "roof")
    row = next(csv.DictReader(open("roof/roofline.csv"))) if rc == 0 else {}
    check("decode attention is memory bound", row.get("boundness") == "MemoryBound", err)

    rc, _, err = run("analyze", "slo", "--tpot", "1.0", "--prefill", "32", "--decode", "32", "--out", "slo")
    check("slo writes a curve", rc == 0 and len(open("slo/slo.csv").read().splitlines()) > 1, err)

    rc, _, err = run("analyze", "fiverule", "--per-token", "1.3e-3,5e-6", "--M", "100000", "--out", "fr")
    rows = list(csv.DictReader(open("fr/fiverule.csv"))) if rc == 0 else []
    vals = [float(r["interval_s"]) for r in rows]
    check("fiverule per-token intervals",
          len(vals) == 2 and abs(vals[0] - 130) / 130 < 0.01 and abs(vals[1] - 0.5) / 0.5 < 0.01, str(vals))

    rc, _, err = run("analyze", "breakeven", "--out", "be")
    check("breakeven writes json", rc == 0 and "status" in load("be/breakeven.json"), err)

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
