// Application shell: login, resource browser with sharing, template designer,
// and the form-based metadata editor. Everything flows through the REST API;
// the only client-side state is the session (base URL + token).

import { ApiClient, ApiError, ResourceRecord } from "./api.js";
import {
    addField,
    insertReference,
    newTemplateDraft,
    removeChild,
    reorderChild,
    toDocument,
    TemplateDraft,
} from "./designer.js";
import {
    addValue,
    buildFormModel,
    FieldNode,
    FormModel,
    removeValue,
    setValue,
    TemplateDoc,
    widgets,
} from "./formModel.js";
import { populateModel, propertyMapOf, saveInstance } from "./instance.js";
import { renderDropdown, renderForm } from "./render.js";
import { DropdownItem, SuggestionEngine } from "./suggest.js";

interface Session {
    api: ApiClient;
    userId: string;
    homeFolder: string;
}

let session: Session | null = null;

function root(): HTMLElement {
    return document.getElementById("app")!;
}

function swap(view: HTMLElement): void {
    const container = root();
    container.innerHTML = "";
    container.appendChild(view);
}

function banner(message: string, kind = "error"): HTMLElement {
    const el = document.createElement("div");
    el.className = `banner banner-${kind}`;
    el.textContent = message;
    return el;
}

// -- login -------------------------------------------------------------------

export function showLogin(): void {
    const view = document.createElement("div");
    view.className = "login";
    view.innerHTML = `
        <h1>metaforge</h1>
        <label>API base URL <input id="base-url" value="http://127.0.0.1:9090"></label>
        <label>API key <input id="token" type="password"></label>
        <button id="login">Sign in</button>
    `;
    view.querySelector("#login")!.addEventListener("click", async () => {
        const baseUrl = (view.querySelector("#base-url") as HTMLInputElement).value;
        const token = (view.querySelector("#token") as HTMLInputElement).value;
        const api = new ApiClient({ baseUrl, token });
        try {
            const me = await api.me();
            session = { api, userId: me.userId, homeFolder: me.homeFolder };
            await showBrowser(me.homeFolder);
        } catch (error) {
            view.prepend(banner(error instanceof ApiError
                ? `sign-in failed: ${error.message}` : "sign-in failed"));
        }
    });
    swap(view);
}

// -- resource browser ----------------------------------------------------------

export async function showBrowser(folderId: string): Promise<void> {
    const { api } = session!;
    const view = document.createElement("div");
    view.className = "browser";
    const heading = document.createElement("h2");
    heading.textContent = "Resources";
    view.appendChild(heading);

    const toolbar = document.createElement("div");
    toolbar.className = "toolbar";
    const newTemplate = document.createElement("button");
    newTemplate.textContent = "New template";
    newTemplate.addEventListener("click", () => showDesigner(folderId));
    toolbar.appendChild(newTemplate);
    const searchBox = document.createElement("input");
    searchBox.placeholder = "search…";
    searchBox.addEventListener("change", async () => {
        const hits = await api.search({ q: searchBox.value });
        renderListing(hits);
    });
    toolbar.appendChild(searchBox);
    view.appendChild(toolbar);

    const listing = document.createElement("ul");
    listing.className = "listing";
    view.appendChild(listing);

    const renderListing = (records: ResourceRecord[]) => {
        listing.innerHTML = "";
        for (const record of records) {
            const row = document.createElement("li");
            row.className = `row row-${record.resourceType}`;
            const open = document.createElement("a");
            open.href = "#";
            open.textContent = `${record.resourceType}: ${record.name}`;
            open.addEventListener("click", async (event) => {
                event.preventDefault();
                if (record.resourceType === "folder") {
                    await showBrowser(record.id);
                } else if (record.resourceType === "template") {
                    await showEditor(record);
                }
            });
            row.appendChild(open);
            const share = document.createElement("button");
            share.textContent = "share";
            share.addEventListener("click", async () => {
                const target = prompt("share read with user id (uuid):");
                if (!target) return;
                try {
                    await api.setPermissions(record.id, [
                        { principal: { kind: "user", id: target }, level: "read" },
                    ]);
                    row.appendChild(banner("shared", "info"));
                } catch (error) {
                    row.appendChild(banner(String(error)));
                }
            });
            row.appendChild(share);
            listing.appendChild(row);
        }
    };

    try {
        renderListing(await api.listChildren(folderId));
    } catch (error) {
        view.appendChild(banner(`cannot list folder: ${String(error)}`));
    }
    swap(view);
}

// -- metadata editor --------------------------------------------------------------

export async function showEditor(templateRecord: ResourceRecord,
                                 instanceRecord?: ResourceRecord): Promise<void> {
    const { api } = session!;
    const templateDoc = templateRecord.payload as TemplateDoc;
    let schema: Record<string, unknown> | undefined;
    try {
        schema = await api.getSchema(templateRecord.id);
    } catch (error) {
        swap(banner(`cannot load the template schema: ${String(error)}`));
        return;
    }
    const model: FormModel = buildFormModel(templateDoc, schema);
    if (instanceRecord) {
        model.resourceId = instanceRecord.id;
        model.version = instanceRecord.version;
        populateModel(model, instanceRecord.payload as Record<string, unknown>);
    }
    const properties = propertyMapOf(templateDoc);
    const engine = new SuggestionEngine(api, templateRecord.id);
    const instanceId = `urn:metaforge:instance:${crypto.randomUUID()}`;

    const view = document.createElement("div");
    view.className = "editor";
    const heading = document.createElement("h2");
    heading.textContent = `Fill in: ${templateRecord.name}`;
    view.appendChild(heading);

    let dropdownHost: HTMLElement | null = null;

    const rerender = () => {
        const form = renderForm(model, {
            onInput: (field, index, text) => {
                setValue(field, index, field.widgetKind === "termPicker"
                    ? { kind: "term", iri: "", label: text }
                    : { kind: "literal", text });
                void offerSuggestions(field, text);
            },
            onFocus: (field) => { void offerSuggestions(field, ""); },
            onAdd: (field) => {
                addValue(field, field.widgetKind === "termPicker"
                    ? { kind: "term", iri: "", label: "" }
                    : { kind: "literal", text: "" });
                rerender();
            },
            onRemove: (field, index) => {
                removeValue(field, index);
                rerender();
            },
            onSave: () => { void save(); },
        });
        view.querySelector("form")?.remove();
        view.appendChild(form);
    };

    const offerSuggestions = async (field: FieldNode, typed: string) => {
        const items = await engine.request(field, typed, model);
        if (items === null) return; // superseded by a newer request
        dropdownHost?.remove();
        dropdownHost = null;
        if (items.length === 0) return;
        dropdownHost = renderDropdown(items, (item: DropdownItem) => {
            const value = item.iri !== undefined
                ? { kind: "term" as const, iri: item.iri, label: item.display }
                : { kind: "literal" as const, text: item.value };
            if (field.values.length === 0) field.values.push(value);
            else field.values[field.values.length - 1] = value;
            dropdownHost?.remove();
            dropdownHost = null;
            rerender();
        });
        view.querySelector(`[data-path="${field.path}"]`)?.appendChild(dropdownHost);
    };

    const save = async () => {
        const outcome = await saveInstance(api, model, instanceId, properties);
        if (outcome.status === "saved") {
            await showBrowser(session!.homeFolder);
        } else if (outcome.status === "conflict") {
            const reload = confirm(
                "Someone else changed this instance. Reload their version? "
                + "Your entries stay in the form either way.");
            if (reload && model.resourceId) {
                const fresh = await api.getResource(model.resourceId);
                model.version = fresh.version;
            }
        } else {
            rerender(); // invalid: errors are attached to the widgets now
        }
    };

    rerender();
    swap(view);
}

// -- template designer ---------------------------------------------------------------

export function showDesigner(parentFolder: string): void {
    const { api } = session!;
    let draft: TemplateDraft = newTemplateDraft(crypto.randomUUID(), "untitled");

    const view = document.createElement("div");
    view.className = "designer";
    view.innerHTML = `
        <h2>Template designer</h2>
        <label>Name <input id="template-name" value="untitled"></label>
        <div class="field-adder">
            <input id="field-name" placeholder="field name">
            <select id="field-type">
                <option>text</option><option>paragraph</option>
                <option>number</option><option>date</option><option>term</option>
            </select>
            <input id="term-iri" placeholder="allowed term IRI (term fields)">
            <input id="element-ref" placeholder="element id to reference">
            <button id="add-field">Add field</button>
            <button id="add-ref">Add reference</button>
        </div>
        <ol id="field-list"></ol>
        <button id="save-template">Save template</button>
        <h3>JSON Schema preview</h3>
        <pre id="schema-preview">(saved templates only)</pre>
    `;

    const fieldList = view.querySelector("#field-list")!;
    const redraw = () => {
        fieldList.innerHTML = "";
        draft.children.forEach((child, index) => {
            const row = document.createElement("li");
            row.textContent = child.ref !== undefined
                ? `reference → ${child.ref}`
                : `${child.name} (${child.fieldType})`;
            const up = document.createElement("button");
            up.textContent = "↑";
            up.disabled = index === 0;
            up.addEventListener("click", () => {
                draft = reorderChild(draft, index, index - 1);
                redraw();
            });
            const drop = document.createElement("button");
            drop.textContent = "remove";
            drop.addEventListener("click", () => {
                draft = child.ref !== undefined
                    ? { ...draft, children: draft.children.filter((_, i) => i !== index) }
                    : removeChild(draft, child.name as string);
                redraw();
            });
            row.append(" ", up, " ", drop);
            fieldList.appendChild(row);
        });
    };

    view.querySelector("#add-field")!.addEventListener("click", () => {
        const name = (view.querySelector("#field-name") as HTMLInputElement).value;
        const fieldType = (view.querySelector("#field-type") as HTMLSelectElement).value as
            "text" | "paragraph" | "number" | "date" | "term";
        const termIri = (view.querySelector("#term-iri") as HTMLInputElement).value;
        try {
            draft = addField(draft, {
                name, fieldType,
                propertyIri: `http://example.org/prop/${name}`,
                constraints: fieldType === "term"
                    ? { sources: [{ kind: "literalList", entries: [{ label: name, iri: termIri }] }] }
                    : undefined,
            });
            redraw();
        } catch (error) {
            view.prepend(banner(String(error)));
        }
    });

    view.querySelector("#add-ref")!.addEventListener("click", () => {
        const refId = (view.querySelector("#element-ref") as HTMLInputElement).value;
        if (!refId) return;
        draft = insertReference(draft, refId);
        redraw();
    });

    view.querySelector("#save-template")!.addEventListener("click", async () => {
        draft = { ...draft, name: (view.querySelector("#template-name") as HTMLInputElement).value };
        try {
            const record = await api.createTemplate(toDocument(draft), parentFolder);
            const schema = await api.getSchema(record.id);
            (view.querySelector("#schema-preview") as HTMLElement).textContent =
                JSON.stringify(schema, null, 2);
            view.prepend(banner(`saved template ${record.name}`, "info"));
        } catch (error) {
            view.prepend(banner(String(error)));
        }
    });

    redraw();
    swap(view);
}

export function start(): void {
    showLogin();
}
