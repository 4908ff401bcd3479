// Single-page annotation flow: login, one task on screen, submit, next.
// The client renders candidates exactly in the server-provided order and
// performs no shuffling of its own; system identities never reach this
// code because the task payload does not contain them.

import { ApiClient, RejectedJudgmentError, SessionExpiredError } from "./api.js";
import {
  BwsSelectionState,
  PairwiseSelectionState,
  RankingSelectionState,
} from "./state.js";
import type { TaskView } from "./types.js";

const $ = (sel: string): HTMLElement => {
  const el = document.querySelector(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el as HTMLElement;
};

function el(tag: string, className = "", text = ""): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

interface AppState {
  client: ApiClient;
  campaignId: string;
  annotatorId: string;
}

let app: AppState | null = null;

async function login(): Promise<void> {
  const base = (($("#server") as HTMLInputElement).value || window.location.origin).replace(/\/$/, "");
  const campaignId = ($("#campaign") as HTMLInputElement).value.trim();
  const annotatorId = ($("#annotator") as HTMLInputElement).value.trim();
  const client = new ApiClient(base);
  await client.openSession(annotatorId, campaignId);
  app = { client, campaignId, annotatorId };
  $("#login").hidden = true;
  $("#workspace").hidden = false;
  await showNext();
}

async function showNext(): Promise<void> {
  if (!app) return;
  const { client, campaignId } = app;
  const next = await client.nextTask(campaignId);
  $("#progress").textContent = `${next.done} / ${next.total} done`;
  const host = $("#task");
  host.replaceChildren();
  if (!next.task) {
    host.appendChild(el("p", "done", "All assigned tasks are complete. Thank you!"));
    return;
  }
  renderTask(host, next.task);
}

function renderTask(host: HTMLElement, task: TaskView): void {
  host.appendChild(el("h2", "", `Abstract ${task.abstract_id}`));
  host.appendChild(el("p", "abstract", task.abstract_text));
  if (task.kind === "BestWorst") renderBws(host, task);
  else if (task.kind === "Ranking") renderRanking(host, task);
  else renderPairwise(host, task);
}

function submitButton(onClick: () => Promise<void>): HTMLButtonElement {
  const btn = el("button", "submit", "Submit") as HTMLButtonElement;
  btn.disabled = true;
  btn.addEventListener("click", () => {
    void onClick();
  });
  return btn;
}

async function deliver(payloads: Array<Parameters<ApiClient["submitJudgment"]>[1]>): Promise<void> {
  if (!app) return;
  const { client, campaignId, annotatorId } = app;
  try {
    for (const body of payloads) {
      await client.submitJudgment(campaignId, body);
    }
    await showNext();
  } catch (err) {
    if (err instanceof SessionExpiredError) {
      // re-auth without losing the queued judgments, then retry
      await client.openSession(annotatorId, campaignId);
      await client.flushPending();
      await showNext();
    } else if (err instanceof RejectedJudgmentError) {
      $("#status").textContent = err.message;
    } else {
      $("#status").textContent = "offline: judgment saved, retrying...";
      setTimeout(() => {
        void client.flushPending().then(showNext);
      }, 2000);
    }
  }
}

function renderBws(host: HTMLElement, task: TaskView): void {
  const state = new BwsSelectionState(task.candidates.map((c) => c.candidate_id));
  const btn = submitButton(async () => {
    if (!app) return;
    await deliver([state.payload(task.instance_id, app.annotatorId)]);
  });
  const list = el("ol", "candidates");
  const refresh = () => {
    btn.disabled = !state.canSubmit();
    for (const item of Array.from(list.children)) {
      const id = (item as HTMLElement).dataset["cid"]!;
      item.className = state.marks(id) ?? "";
    }
  };
  task.candidates.forEach((cand, idx) => {
    const item = el("li", "", "");
    item.dataset["cid"] = cand.candidate_id;
    item.appendChild(el("span", "title", cand.title));
    const best = el("button", "", `best (${idx + 1})`);
    const worst = el("button", "", `worst (shift+${idx + 1})`);
    best.addEventListener("click", () => {
      state.toggle("best", cand.candidate_id);
      refresh();
    });
    worst.addEventListener("click", () => {
      state.toggle("worst", cand.candidate_id);
      refresh();
    });
    item.append(best, worst);
    list.appendChild(item);
  });
  document.onkeydown = (ev) => {
    const slot = Number(ev.key) - 1;
    const cand = task.candidates[slot];
    if (!cand) return;
    state.toggle(ev.shiftKey ? "worst" : "best", cand.candidate_id);
    refresh();
  };
  host.append(el("p", "hint", "Pick the 2 best and the 2 worst titles."), list, btn);
}

function renderRanking(host: HTMLElement, task: TaskView): void {
  const criteria = task.criteria.length ? task.criteria : ["quality", "humor"];
  const state = new RankingSelectionState(
    task.candidates.map((c) => c.candidate_id),
    criteria,
  );
  const btn = submitButton(async () => {
    if (!app) return;
    await deliver(state.payloads(task.instance_id, app.annotatorId));
  });
  for (const criterion of criteria) {
    host.appendChild(el("h3", "", `Rank by ${criterion} (ties allowed, 1 = best)`));
    const list = el("ol", "candidates");
    for (const cand of task.candidates) {
      const item = el("li", "", "");
      item.appendChild(el("span", "title", cand.title));
      const input = el("input") as HTMLInputElement;
      input.type = "number";
      input.min = "1";
      input.max = String(task.candidates.length);
      input.addEventListener("input", () => {
        state.setRank(criterion, cand.candidate_id, Number(input.value));
        btn.disabled = !state.canSubmit();
      });
      item.appendChild(input);
      list.appendChild(item);
    }
    host.appendChild(list);
  }
  host.appendChild(btn);
}

function renderPairwise(host: HTMLElement, task: TaskView): void {
  const state = new PairwiseSelectionState();
  const btn = submitButton(async () => {
    if (!app) return;
    await deliver([state.payload(task.instance_id, app.annotatorId)]);
  });
  const list = el("div", "pair");
  const options = [
    ["First", task.candidates[0]?.title ?? ""],
    ["Second", task.candidates[1]?.title ?? ""],
    ["Equal", "cannot differentiate"],
  ] as const;
  for (const [value, label] of options) {
    const choice = el("button", "choice", `${value}: ${label}`);
    choice.addEventListener("click", () => {
      state.choose(value);
      btn.disabled = !state.canSubmit();
    });
    list.appendChild(choice);
  }
  host.append(el("p", "hint", "Which title is better?"), list, btn);
}

export function boot(): void {
  $("#login-button").addEventListener("click", () => {
    void login().catch((err) => {
      $("#status").textContent = String(err);
    });
  });
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
