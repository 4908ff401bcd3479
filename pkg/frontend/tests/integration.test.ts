// End-to-end: spawn the real annotation service, drive two scripted
// annotators through a 10-instance best-worst campaign with the app's own
// client and selection state, and verify
//   - no network payload seen by an annotator ever contains a system tag,
//   - invalid selections cannot be submitted (client guard + server 422),
//   - the analysis export re-derives scores identical to the scoring CLI,
//   - ranking tasks accept all-tied rankings on two criteria and export
//     tie-compressed ranks for both.
//
// Requires python3 with the backend package installed (the repository
// root's `pip install -e .`).

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, RejectedJudgmentError, type FetchLike } from "../src/api.js";
import { BwsSelectionState, RankingSelectionState } from "../src/state.js";
import type { TaskView } from "../src/types.js";

const HIDDEN_TAGS = [
  "hidden_system_0",
  "hidden_system_1",
  "hidden_system_2",
  "hidden_system_3",
  "hidden_system_4",
  "hidden_system_5",
];

const PORT = 8700 + Math.floor(Math.random() * 200);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let dataDir = "";
let workDir = "";

function cli(args: string[]): void {
  const result = spawnSync("python3", ["-m", "a2teval.cli", ...args], { encoding: "utf-8" });
  if (result.status !== 0) {
    throw new Error(`cli ${args[0]} failed: ${result.stderr}`);
  }
}

function makeInstancesFile(path: string, n: number, candidates: number): void {
  const items = [];
  for (let i = 0; i < n; i++) {
    items.push({
      id: `i${i}`,
      abstract_id: `abs${i}`,
      abstract_text: `Synthetic abstract number ${i} about an experiment.`,
      candidates: Array.from({ length: candidates }, (_, j) => ({
        candidate_id: `i${i}_c${j}`,
        title: `Candidate title ${i}.${j}`,
        system: HIDDEN_TAGS[j % HIDDEN_TAGS.length],
      })),
    });
  }
  writeFileSync(path, JSON.stringify(items));
}

async function waitForServer(): Promise<void> {
  for (let attempt = 0; attempt < 60; attempt++) {
    try {
      const resp = await fetch(`${BASE}/campaigns`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("service did not become ready");
}

/** Records every request body and response text that crosses the wire. */
function recordingFetch(log: string[]): FetchLike {
  return async (url, init) => {
    if (init?.body) log.push(String(init.body));
    const resp = await fetch(url, init);
    const text = await resp.clone().text();
    log.push(text);
    return resp;
  };
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "a2teval-ui-"));
  dataDir = join(workDir, "data");
  const bwInstances = join(workDir, "bw.json");
  const rankInstances = join(workDir, "rank.json");
  makeInstancesFile(bwInstances, 10, 6);
  makeInstancesFile(rankInstances, 3, 5);
  cli([
    "campaign", "create", "--id", "ui-camp", "--kind", "BestWorst",
    "--instances", bwInstances, "--annotators", "bot1,bot2",
    "--per-instance", "2", "--seed", "11", "--data-dir", dataDir,
  ]);
  cli([
    "campaign", "create", "--id", "rank-camp", "--kind", "Ranking",
    "--instances", rankInstances, "--annotators", "bot1,bot2",
    "--per-instance", "2", "--seed", "12", "--data-dir", dataDir,
  ]);
  server = spawn("python3", ["-m", "a2teval.cli", "serve", "--data-dir", dataDir, "--port", String(PORT)], {
    stdio: "ignore",
  });
  await waitForServer();
}, 40000);

afterAll(() => {
  server?.kill("SIGKILL");
});

describe("two scripted annotators over live HTTP", () => {
  const traffic: string[] = [];

  it("completes the campaign blind to system identities", async () => {
    for (const bot of ["bot1", "bot2"]) {
      const client = new ApiClient(BASE, recordingFetch(traffic));
      await client.openSession(bot, "ui-camp");
      let guard = 0;
      for (;;) {
        expect(guard++).toBeLessThan(30);
        const next = await client.nextTask("ui-camp");
        if (next.task === null) break;
        const task = next.task as TaskView;
        // server-provided presentation order is rendered as-is; pick a
        // deterministic but annotator-specific selection from it
        const ids = task.candidates.map((c) => c.candidate_id);
        const state = new BwsSelectionState(ids);
        const shift = bot === "bot1" ? 0 : 1;
        state.toggle("best", ids[shift]!);
        state.toggle("best", ids[shift + 1]!);
        state.toggle("worst", ids[shift + 2]!);
        state.toggle("worst", ids[shift + 3]!);
        expect(state.canSubmit()).toBe(true);
        const receipt = await client.submitJudgment("ui-camp", state.payload(task.instance_id, bot));
        expect(receipt.seq).toBeGreaterThan(0);
      }
      const progress = await client.progress("ui-camp");
      expect(progress.annotators[bot]!.done).toBe(10);
    }
    // every byte an annotator saw, request or response: no system tags
    expect(traffic.length).toBeGreaterThan(40);
    for (const payload of traffic) {
      for (const tag of HIDDEN_TAGS) {
        expect(payload).not.toContain(tag);
      }
    }
  }, 30000);

  it("blocks invalid selections client-side and server-side", async () => {
    const client = new ApiClient(BASE, recordingFetch(traffic));
    await client.openSession("bot1", "ui-camp");
    const state = new BwsSelectionState(["x0", "x1", "x2", "x3", "x4", "x5"]);
    state.toggle("best", "x0");
    state.toggle("best", "x1");
    state.toggle("worst", "x2");
    // three picks only: the UI submit stays disabled and payload() throws
    expect(state.canSubmit()).toBe(false);
    expect(() => state.payload("i0", "bot1")).toThrow();
    // a handcrafted overlapping judgment is refused by the server
    await expect(
      client.submitJudgment("ui-camp", {
        kind: "BestWorst",
        instance_id: "i0",
        annotator_id: "bot1",
        best: ["i0_c0", "i0_c1"],
        worst: ["i0_c1", "i0_c2"],
      }),
    ).rejects.toThrow(RejectedJudgmentError);
  }, 15000);

  it("export-derived scores equal the scoring CLI exactly", async () => {
    const exportResp = await fetch(`${BASE}/campaigns/ui-camp/export?view=analysis`);
    const exportCsv = await exportResp.text();
    const lines = exportCsv.trim().split("\n");
    const header = lines[0]!.split(",");
    const col = (name: string) => header.indexOf(name);
    const tally = new Map<string, { nb: number; nw: number }>();
    const annotators = new Map<string, Set<string>>();
    for (const line of lines.slice(1)) {
      const cells = line.split(",");
      const instance = cells[col("instance_id")]!;
      const candidate = cells[col("candidate_id")]!;
      const key = `${instance},${candidate}`;
      const entry = tally.get(key) ?? { nb: 0, nw: 0 };
      entry.nb += Number(cells[col("best")]);
      entry.nw += Number(cells[col("worst")]);
      tally.set(key, entry);
      if (!annotators.has(instance)) annotators.set(instance, new Set());
      annotators.get(instance)!.add(cells[col("annotator_id")]!);
    }
    const fromExport = new Map<string, number>();
    for (const [key, { nb, nw }] of tally) {
      const instance = key.split(",")[0]!;
      fromExport.set(key, (nb - nw) / annotators.get(instance)!.size);
    }

    const scoresCsv = join(workDir, "scores.csv");
    cli(["score-bws", "--campaign", "ui-camp", "--data-dir", dataDir, "--output", scoresCsv]);
    const scoreLines = readFileSync(scoresCsv, "utf-8").trim().split("\n");
    const scoreHeader = scoreLines[0]!.split(",");
    const scol = (name: string) => scoreHeader.indexOf(name);
    expect(scoreLines.length - 1).toBe(fromExport.size);
    for (const line of scoreLines.slice(1)) {
      const cells = line.split(",");
      const key = `${cells[scol("instance_id")]},${cells[scol("candidate_id")]}`;
      expect(fromExport.get(key)).toBe(Number(cells[scol("bws")]));
    }
  }, 15000);
});

describe("ranking with ties over live HTTP", () => {
  it("submits an all-tied ranking and two criteria; export shows both", async () => {
    const client = new ApiClient(BASE);
    await client.openSession("bot1", "rank-camp");
    const next = await client.nextTask("rank-camp");
    const task = next.task as TaskView;
    expect(task.kind).toBe("Ranking");
    expect(task.criteria).toEqual(["quality", "humor"]);
    const ids = task.candidates.map((c) => c.candidate_id);

    const state = new RankingSelectionState(ids, task.criteria);
    for (const id of ids) state.setRank("quality", id, 3); // all tied
    ids.forEach((id, i) => state.setRank("humor", id, [4, 4, 7, 9, 9][i]!));
    const bodies = state.payloads(task.instance_id, "bot1");
    for (const body of bodies) {
      const receipt = await client.submitJudgment("rank-camp", body);
      expect(receipt.seq).toBeGreaterThan(0);
    }
    // both criteria submitted together advance the task pointer
    const after = await client.nextTask("rank-camp");
    expect(after.task?.instance_id).not.toBe(task.instance_id);
    expect(after.done).toBe(1);

    const exportCsv = await (await fetch(`${BASE}/campaigns/rank-camp/export?view=analysis`)).text();
    const rows = exportCsv.trim().split("\n").slice(1).map((l) => l.split(","));
    const header = exportCsv.trim().split("\n")[0]!.split(",");
    const col = (name: string) => header.indexOf(name);
    const forInstance = rows.filter((r) => r[col("instance_id")] === task.instance_id);
    const quality = forInstance.filter((r) => r[col("criterion")] === "quality");
    const humor = forInstance.filter((r) => r[col("criterion")] === "humor");
    expect(quality).toHaveLength(5);
    expect(humor).toHaveLength(5);
    expect(quality.map((r) => r[col("rank")])).toEqual(["1", "1", "1", "1", "1"]);
    expect(new Set(humor.map((r) => r[col("rank")]))).toEqual(new Set(["1", "3", "4"]));
  }, 15000);

  it("rejects a non-tie-compressed ranking at the server", async () => {
    const client = new ApiClient(BASE);
    await client.openSession("bot2", "rank-camp");
    const next = await client.nextTask("rank-camp");
    const task = next.task as TaskView;
    const ids = task.candidates.map((c) => c.candidate_id);
    const rank_of: Record<string, number> = {};
    ids.forEach((id, i) => (rank_of[id] = [1, 1, 2, 3, 4][i]!)); // not compressed
    await expect(
      client.submitJudgment("rank-camp", {
        kind: "Ranking",
        instance_id: task.instance_id,
        annotator_id: "bot2",
        rank_of,
        criterion: "quality",
      }),
    ).rejects.toThrow(/tie-compressed/);
  }, 15000);
});
