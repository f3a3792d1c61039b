/**
 * Entry point: wires the config form to a SessionController and
 * re-renders on every state change. Pools come from a registered
 * pool_id or an uploaded JSONL file (one candidate per line).
 */

import { CandidateIn, RankingClient, SessionConfigIn } from "./api.js";
import { SessionController } from "./session.js";
import { render } from "./view.js";

function parsePoolFile(textContent: string): CandidateIn[] {
  const candidates: CandidateIn[] = [];
  for (const line of textContent.split("\n")) {
    if (line.trim() === "") {
      continue;
    }
    candidates.push(JSON.parse(line) as CandidateIn);
  }
  return candidates;
}

function formValue(form: HTMLFormElement, name: string): string {
  return (form.elements.namedItem(name) as HTMLInputElement | HTMLSelectElement).value;
}

async function onSubmit(event: SubmitEvent, controller: SessionController): Promise<void> {
  event.preventDefault();
  const form = event.currentTarget as HTMLFormElement;
  const config: SessionConfigIn = {
    learner: formValue(form, "learner") as SessionConfigIn["learner"],
    strategy: formValue(form, "strategy") as SessionConfigIn["strategy"],
    max_interactions: Number(formValue(form, "budget")),
    seed: Number(formValue(form, "seed")),
  };
  const poolId = formValue(form, "pool_id").trim();
  const fileInput = form.elements.namedItem("pool_file") as HTMLInputElement;
  if (poolId !== "") {
    await controller.start({ config, pool_id: poolId });
  } else if (fileInput.files && fileInput.files.length > 0) {
    const pool = parsePoolFile(await fileInput.files[0].text());
    await controller.start({ config, pool });
  } else {
    alert("give a pool id or upload a pool file");
  }
}

export function bootstrap(doc: Document): void {
  const form = doc.getElementById("config-form") as HTMLFormElement;
  const stage = doc.getElementById("stage") as HTMLElement;
  const base = (doc.getElementById("service-url") as HTMLInputElement).value;
  const topK = Number((doc.getElementById("top-k") as HTMLInputElement).value) || 5;

  const controller = new SessionController(new RankingClient(base), {
    topK,
    onChange: (view) => render(stage, view, { onChoose: (side) => void controller.choose(side) }),
  });
  form.addEventListener("submit", (event) => void onSubmit(event, controller));
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => bootstrap(document));
}
