// Debounced suggestion fetching for the metadata editor: recommender
// suggestions for every widget, merged with terminology search hits for term
// pickers (recommender entries first). Failures degrade to an empty list so
// the field stays editable.

import { ApiClient } from "./api.js";
import { FieldNode, FormModel, widgets } from "./formModel.js";

export interface DropdownItem {
    display: string;
    value: string;        // literal text or term IRI
    iri?: string;         // set for ontology terms
    origin: "recommender" | "terminology";
    score?: number;
}

export const DEBOUNCE_MS = 250;
export const DROPDOWN_CAP = 8;

export function contextFromModel(model: FormModel, targetPath: string):
    Array<{ path: string; value: string }> {
    const out: Array<{ path: string; value: string }> = [];
    for (const widget of widgets(model)) {
        if (widget.path === targetPath) continue;
        for (const value of widget.values) {
            if (value.kind === "term" && value.iri) {
                out.push({ path: widget.path, value: value.iri });
            } else if (value.kind === "literal" && value.text) {
                out.push({ path: widget.path, value: value.text });
            }
        }
    }
    return out;
}

export class SuggestionEngine {
    private timer: ReturnType<typeof setTimeout> | null = null;
    private generation = 0;

    constructor(private api: ApiClient, private templateId: string,
                private debounceMs: number = DEBOUNCE_MS) {}

    // Resolves with the dropdown for the *last* request in a burst; earlier
    // bursts resolve with null so stale renders can be skipped.
    request(widget: FieldNode, typed: string, model: FormModel):
        Promise<DropdownItem[] | null> {
        if (this.timer !== null) {
            clearTimeout(this.timer);
            this.timer = null;
        }
        const generation = ++this.generation;
        return new Promise((resolve) => {
            this.timer = setTimeout(async () => {
                this.timer = null;
                const items = await this.fetch(widget, typed, model);
                resolve(generation === this.generation ? items : null);
            }, this.debounceMs);
        });
    }

    async fetch(widget: FieldNode, typed: string, model: FormModel):
        Promise<DropdownItem[]> {
        const items: DropdownItem[] = [];
        const seen = new Set<string>();
        try {
            const suggestions = await this.api.recommend({
                templateId: this.templateId,
                targetPath: widget.path,
                context: contextFromModel(model, widget.path),
                k: DROPDOWN_CAP,
            });
            for (const s of suggestions) {
                if (seen.has(s.valueKey)) continue;
                seen.add(s.valueKey);
                items.push({
                    display: s.display,
                    value: s.valueKey,
                    iri: widget.widgetKind === "termPicker" ? s.valueKey : undefined,
                    origin: "recommender",
                    score: s.score,
                });
            }
        } catch {
            // no recommendations is not an error state
        }
        if (widget.widgetKind === "termPicker" && typed.trim() !== "") {
            try {
                const found = await this.api.terminologySearch(typed, undefined, DROPDOWN_CAP);
                for (const term of found.terms) {
                    if (seen.has(term.iri)) continue;
                    seen.add(term.iri);
                    items.push({
                        display: term.label,
                        value: term.iri,
                        iri: term.iri,
                        origin: "terminology",
                    });
                }
            } catch {
                // degrade silently; the recommender part may still be useful
            }
        }
        return items.slice(0, DROPDOWN_CAP);
    }
}
