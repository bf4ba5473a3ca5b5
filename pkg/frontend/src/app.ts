// DOM wiring for the chat + inspection UI. One request in flight per
// session: the send button stays disabled until the turn returns, and a
// 409 from the service keeps it usable for the next attempt.

import { ApiError, ScmClient } from "./api.js";
import { pollJob } from "./poll.js";
import {
  renderChatMessage,
  renderError,
  renderJob,
  renderMemoryPage,
  renderTracePanel,
} from "./views.js";

const $ = <T extends HTMLElement>(selector: string): T => {
  const node = document.querySelector<T>(selector);
  if (!node) throw new Error(`missing element ${selector}`);
  return node;
};

let client = new ScmClient(localStorage.getItem("scmem.baseUrl") ?? window.location.origin);
let sessionId: string | null = null;
let inFlight = false;
let memoryPage = 1;

const messages = $("#messages");
const tracePanel = $("#trace-panel");
const memoryPanel = $("#memory-panel");
const errorBar = $("#error-bar");
const sendButton = $<HTMLButtonElement>("#send");
const input = $<HTMLInputElement>("#observation");

function showError(err: unknown): void {
  const retryable = err instanceof ApiError && err.retryable;
  const message = err instanceof Error ? err.message : String(err);
  errorBar.innerHTML = renderError(message, retryable);
}

function clearError(): void {
  errorBar.innerHTML = "";
}

async function refreshMemories(): Promise<void> {
  if (!sessionId) return;
  const page = await client.listMemories(sessionId, memoryPage);
  const filter = $<HTMLInputElement>("#memory-filter").value.trim().toLowerCase();
  memoryPanel.innerHTML = renderMemoryPage(page);
  if (filter) {
    // presentation-only: hide rows that don't mention the filter text
    memoryPanel.querySelectorAll<HTMLElement>("li.memory").forEach((row) => {
      row.style.display = row.textContent?.toLowerCase().includes(filter) ? "" : "none";
    });
  }
}

async function newSession(): Promise<void> {
  clearError();
  const info = await client.createSession({});
  sessionId = info.session_id;
  memoryPage = 1;
  messages.innerHTML = "";
  tracePanel.innerHTML = '<p class="empty">no turns yet</p>';
  $("#session-label").textContent = `session ${info.session_id} · backend ${info.backend}`;
  await refreshMemories();
}

async function send(): Promise<void> {
  if (!sessionId || inFlight) return;
  const text = input.value.trim();
  if (!text) return;
  inFlight = true;
  sendButton.disabled = true;
  clearError();
  messages.insertAdjacentHTML("beforeend", renderChatMessage("user", text));
  try {
    const reply = await client.postMessage(sessionId, text);
    messages.insertAdjacentHTML("beforeend", renderChatMessage("assistant", reply.response));
    messages.scrollTop = messages.scrollHeight;
    input.value = "";
    const trace = await client.getTrace(sessionId, reply.turn);
    tracePanel.innerHTML = renderTracePanel(trace);
    await refreshMemories();
  } catch (err) {
    showError(err);
  } finally {
    inFlight = false;
    sendButton.disabled = false;
  }
}

async function inspectTurn(): Promise<void> {
  if (!sessionId) return;
  const turn = Number($<HTMLInputElement>("#inspect-turn").value);
  if (Number.isNaN(turn)) return;
  clearError();
  try {
    const trace = await client.getTrace(sessionId, turn);
    tracePanel.innerHTML = renderTracePanel(trace);
  } catch (err) {
    showError(err);
  }
}

async function summarize(): Promise<void> {
  const text = $<HTMLTextAreaElement>("#doc-input").value;
  const output = $("#job-panel");
  clearError();
  try {
    const { job_id } = await client.summarize(text);
    const job = await pollJob(client, job_id, (update) => {
      output.innerHTML = renderJob(update);
    });
    output.innerHTML = renderJob(job);
  } catch (err) {
    showError(err);
  }
}

function bind(): void {
  $("#new-session").addEventListener("click", () => void newSession().catch(showError));
  sendButton.addEventListener("click", () => void send());
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter") void send();
  });
  $("#inspect-go").addEventListener("click", () => void inspectTurn());
  $("#memory-refresh").addEventListener("click", () => void refreshMemories().catch(showError));
  $("#memory-filter").addEventListener("input", () => void refreshMemories().catch(showError));
  $("#memory-prev").addEventListener("click", () => {
    memoryPage = Math.max(1, memoryPage - 1);
    void refreshMemories().catch(showError);
  });
  $("#memory-next").addEventListener("click", () => {
    memoryPage += 1;
    void refreshMemories().catch(showError);
  });
  $("#summarize-go").addEventListener("click", () => void summarize());
  const baseInput = $<HTMLInputElement>("#base-url");
  baseInput.value = client.baseUrl;
  $("#base-url-apply").addEventListener("click", () => {
    client = new ScmClient(baseInput.value.replace(/\/$/, ""));
    localStorage.setItem("scmem.baseUrl", client.baseUrl);
    sessionId = null;
    $("#session-label").textContent = "no session";
  });
}

bind();
