import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { buildFormModel, widgets, TemplateDoc } from "../src/formModel.js";
import { SuggestionEngine, contextFromModel, DROPDOWN_CAP } from "../src/suggest.js";

import corpusTemplate from "./fixtures/corpus_template.json";
import recommendResponse from "./fixtures/recommend_response.json";
import terminologyResponse from "./fixtures/terminology_search_response.json";
import fiveType from "./fixtures/five_type_template.json";

function recordingClient(handler: (url: string) => { status: number; body: unknown }) {
    const calls: string[] = [];
    const fetchFn = (async (input: RequestInfo | URL) => {
        const url = String(input);
        calls.push(url);
        const next = handler(url);
        return new Response(JSON.stringify(next.body), { status: next.status });
    }) as typeof fetch;
    const api = new ApiClient({ baseUrl: "http://test", token: "t".repeat(32), fetchFn });
    return { api, calls };
}

describe("contextFromModel", () => {
    it("collects filled values, term IRIs included, excluding the target", () => {
        const model = buildFormModel(corpusTemplate as TemplateDoc);
        const tissue = widgets(model).find((w) => w.path === "tissue")!;
        tissue.values = [{ kind: "literal", text: "liver" }];
        expect(contextFromModel(model, "disease")).toEqual([
            { path: "tissue", value: "liver" },
        ]);
        expect(contextFromModel(model, "tissue")).toEqual([]);
    });
});

describe("SuggestionEngine", () => {
    beforeEach(() => vi.useFakeTimers());
    afterEach(() => vi.useRealTimers());

    it("shows the fixture's ranked dropdown for disease given tissue=liver", async () => {
        const { api } = recordingClient(() => ({ status: 200, body: recommendResponse }));
        const model = buildFormModel(corpusTemplate as TemplateDoc);
        const tissue = widgets(model).find((w) => w.path === "tissue")!;
        tissue.values = [{ kind: "literal", text: "liver" }];
        const disease = widgets(model).find((w) => w.path === "disease")!;

        const engine = new SuggestionEngine(api, (corpusTemplate as TemplateDoc).id);
        const pending = engine.request(disease, "", model);
        await vi.advanceTimersByTimeAsync(250);
        const items = await pending;
        expect(items!.map((i) => i.display)).toEqual(["hepatitis", "cirrhosis", "asthma"]);
        expect(items![0].origin).toBe("recommender");
    });

    it("debounces bursts to one network round-trip", async () => {
        const { api, calls } = recordingClient(() => ({ status: 200, body: [] }));
        const model = buildFormModel(corpusTemplate as TemplateDoc);
        const disease = widgets(model).find((w) => w.path === "disease")!;
        const engine = new SuggestionEngine(api, (corpusTemplate as TemplateDoc).id);

        const first = engine.request(disease, "h", model);
        await vi.advanceTimersByTimeAsync(100);
        const second = engine.request(disease, "he", model);
        await vi.advanceTimersByTimeAsync(100);
        const third = engine.request(disease, "hep", model);
        await vi.advanceTimersByTimeAsync(300);

        expect(await third).toEqual([]);
        expect(calls).toHaveLength(1);
        // earlier promises resolve as superseded, never with stale data
        await vi.runAllTimersAsync();
        expect(await Promise.race([first, Promise.resolve("pending")])).toBe("pending");
        void second;
    });

    it("merges terminology hits after recommender entries for term pickers", async () => {
        const { api } = recordingClient((url) =>
            url.includes("/recommend")
                ? { status: 200, body: recommendResponse }
                : { status: 200, body: terminologyResponse });
        const model = buildFormModel(fiveType as TemplateDoc);
        const term = widgets(model).find((w) => w.widgetKind === "termPicker")!;
        const engine = new SuggestionEngine(api, (fiveType as TemplateDoc).id);
        const pending = engine.request(term, "li", model);
        await vi.advanceTimersByTimeAsync(250);
        const items = await pending;
        const origins = items!.map((i) => i.origin);
        expect(origins.slice(0, 3)).toEqual(["recommender", "recommender", "recommender"]);
        expect(origins).toContain("terminology");
        expect(items!.length).toBeLessThanOrEqual(DROPDOWN_CAP);
        const terminologyItem = items!.find((i) => i.origin === "terminology")!;
        expect(terminologyItem.iri).toBe("http://purl.obolibrary.org/obo/UBERON_0002107");
    });

    it("degrades silently to an empty dropdown on network failure", async () => {
        const api = new ApiClient({
            baseUrl: "http://test", token: "t".repeat(32),
            fetchFn: (async () => { throw new TypeError("network down"); }) as typeof fetch,
        });
        const model = buildFormModel(corpusTemplate as TemplateDoc);
        const disease = widgets(model).find((w) => w.path === "disease")!;
        const engine = new SuggestionEngine(api, (corpusTemplate as TemplateDoc).id);
        const pending = engine.request(disease, "", model);
        await vi.advanceTimersByTimeAsync(250);
        expect(await pending).toEqual([]);
    });
});
