// Model editor: a form-per-collection view over the collaboration model.
// Server-side validation findings render inline; saving is refused until
// the server accepts the document.

import type { ConsoleSession } from "../session.js";
import type { CollaborationModel, ValidationFinding } from "../types.js";
import { button, clear, el } from "./helpers.js";

interface LinkProposal {
  path: string;
  concept: string;
  candidates: { concept: string; kind: string }[];
}

export class ModelView {
  private model: CollaborationModel | null = null;
  private version = "";
  private findings: ValidationFinding[] = [];
  private proposals: LinkProposal[] = [];

  constructor(
    private root: HTMLElement,
    private session: ConsoleSession,
  ) {}

  async refresh(): Promise<void> {
    const { model, version } = await this.session.loadModel();
    this.model = model;
    this.version = version;
    this.findings = [];
    this.proposals = await this.session.linkProposals();
    this.render();
  }

  private render(): void {
    clear(this.root);
    if (!this.model) return;
    const m = this.model;
    this.root.append(el("h2", {}, [`${m.name} (${m.network_id})`]));

    if (this.findings.length) {
      this.root.append(
        el("ul", { class: "findings" },
          this.findings.map((f) => el("li", { class: "finding" },
            [`${f.path} [${f.rule}] ${f.message}`]))),
      );
    }

    const partners = el("section", { class: "partners" }, [el("h3", {}, ["Partners"])]);
    for (const p of m.partners) {
      partners.append(el("div", { class: "partner" }, [
        el("strong", {}, [`${p.name} (${p.id})`]),
        el("ul", {}, p.functions.map((f) =>
          el("li", {}, [`${f.name}: ${f.inputs.join(", ")} -> ${f.outputs.join(", ")}`]))),
      ]));
    }
    this.root.append(partners);

    const objectives = el("section", {}, [el("h3", {}, ["Objectives"])]);
    objectives.append(el("ul", {}, m.objectives.map((o) =>
      el("li", {}, [`[${o.kind}] ${o.description} @ ${o.sub_network}`]))));
    this.root.append(objectives);

    if (this.proposals.length) {
      const section = el("section", {}, [el("h3", {}, ["Open concept links"])]);
      for (const proposal of this.proposals) {
        const row = el("div", { class: "proposal" }, [
          el("code", {}, [proposal.path]),
          el("span", {}, [` "${proposal.concept}" -> `]),
        ]);
        for (const candidate of proposal.candidates) {
          row.append(button(`${candidate.concept} (${candidate.kind})`, () => {
            void this.confirm(proposal.path, candidate.concept, candidate.kind);
          }));
        }
        section.append(row);
      }
      this.root.append(section);
    }

    const addForm = el("div", { class: "add-partner" });
    const idInput = el("input", { placeholder: "partner id" });
    const nameInput = el("input", { placeholder: "partner name" });
    addForm.append(
      idInput, nameInput,
      button("add partner", () => {
        if (!idInput.value) return;
        m.partners.push({ id: idInput.value, name: nameInput.value || idInput.value, functions: [] });
        this.render();
      }),
    );
    this.root.append(addForm);

    this.root.append(button("save model", () => void this.save(), "btn primary"));
  }

  async save(): Promise<boolean> {
    if (!this.model) return false;
    const outcome = await this.session.saveModel(this.model, this.version);
    this.findings = outcome.findings;
    if (outcome.saved) {
      await this.refresh();
      return true;
    }
    this.render();
    return false;
  }

  private async confirm(path: string, concept: string, kind: string): Promise<void> {
    await this.session.confirmLink(path, concept, kind);
    await this.refresh();
  }
}

