import { describe, expect, it } from "vitest";

import {
    DesignerError,
    addField,
    annotate,
    insertReference,
    newTemplateDraft,
    removeChild,
    reorderChild,
    setFieldConstraints,
    toDocument,
} from "../src/designer.js";

const LIVER = "http://purl.obolibrary.org/obo/UBERON_0002107";
const TID = "11111111-1111-4111-8111-111111111111";
const EID = "22222222-2222-4222-8222-222222222222";

describe("designer document transforms", () => {
    it("adds the five field types", () => {
        let draft = newTemplateDraft(TID, "T");
        draft = addField(draft, { name: "a", fieldType: "text" });
        draft = addField(draft, { name: "b", fieldType: "paragraph" });
        draft = addField(draft, { name: "c", fieldType: "number" });
        draft = addField(draft, { name: "d", fieldType: "date" });
        draft = addField(draft, {
            name: "e", fieldType: "term",
            constraints: { sources: [{ kind: "literalList", entries: [{ label: "liver", iri: LIVER }] }] },
        });
        expect(draft.children.map((c) => c.fieldType)).toEqual(
            ["text", "paragraph", "number", "date", "term"]);
    });

    it("rejects duplicate sibling names", () => {
        let draft = newTemplateDraft(TID, "T");
        draft = addField(draft, { name: "tissue", fieldType: "text" });
        expect(() => addField(draft, { name: "tissue", fieldType: "date" }))
            .toThrow(DesignerError);
    });

    it("rejects term fields without a constraint source", () => {
        const draft = newTemplateDraft(TID, "T");
        expect(() => addField(draft, { name: "e", fieldType: "term" }))
            .toThrow(DesignerError);
    });

    it("removes and reorders children", () => {
        let draft = newTemplateDraft(TID, "T");
        draft = addField(draft, { name: "first", fieldType: "text" });
        draft = addField(draft, { name: "second", fieldType: "text" });
        draft = addField(draft, { name: "third", fieldType: "text" });
        draft = reorderChild(draft, 2, 0);
        expect(draft.children.map((c) => c.name)).toEqual(["third", "first", "second"]);
        draft = removeChild(draft, "first");
        expect(draft.children.map((c) => c.name)).toEqual(["third", "second"]);
        expect(() => removeChild(draft, "nope")).toThrow(DesignerError);
        expect(() => reorderChild(draft, 0, 9)).toThrow(DesignerError);
    });

    it("updates constraints in place", () => {
        let draft = newTemplateDraft(TID, "T");
        draft = addField(draft, { name: "age", fieldType: "number" });
        draft = setFieldConstraints(draft, "age", { minimum: 0, maximum: 120 });
        expect(draft.children[0].constraints).toEqual({ minimum: 0, maximum: 120 });
    });

    it("annotates the template with terminology picks", () => {
        let draft = newTemplateDraft(TID, "T");
        draft = annotate(draft, {
            propertyIri: "http://example.org/ann", termIri: LIVER, termLabel: "liver",
        });
        expect(draft.annotations).toHaveLength(1);
    });

    it("inserts element references with cardinality", () => {
        let draft = newTemplateDraft(TID, "T");
        draft = addField(draft, { name: "a", fieldType: "text" });
        draft = insertReference(draft, EID, { min: 0, max: 5 }, 0);
        expect(draft.children[0]).toEqual({ ref: EID, cardinality: { min: 0, max: 5 } });
    });

    it("emits a document the server accepts structurally", () => {
        let draft = newTemplateDraft(TID, "T");
        draft = addField(draft, { name: "a", fieldType: "text", required: true });
        const doc = toDocument(draft);
        expect(Object.keys(doc)).toEqual(["id", "kind", "name", "children", "version"]);
        expect(doc.version).toBe(0);
    });
});
