import { ApiError, predict } from './api';
import { renderError, renderResult } from './result';
import { validateFile } from './validate';

// Drag-and-drop upload panel. At most one prediction request is in flight;
// a rejected or failed upload never leaves a partial result on screen.

export function initUploadPanel(container: HTMLElement): void {
    container.innerHTML = `
    <div class="upload-layout">
      <div class="drop-zone" id="drop-zone">
        <div class="drop-arrow">&#8593;</div>
        <p>Drop conjunctiva or fingernail photo here, or click to choose</p>
        <p class="drop-hint">Accepted: JPG, PNG &middot; Max size: 10 MB</p>
        <input type="file" id="file-input" accept="image/jpeg,image/png" hidden>
        <div class="selected-file" id="selected-file"></div>
      </div>
      <form class="patient-form" id="patient-form">
        <label>Patient name
          <input type="text" id="patient-name" required placeholder="Self-reported name">
        </label>
        <label>Sex
          <select id="patient-sex">
            <option value="unspecified">Unspecified</option>
            <option value="female">Female</option>
            <option value="male">Male</option>
          </select>
        </label>
        <button type="submit" id="analyse-button">Analyse Image</button>
        <div class="progress-track" id="progress-track" hidden>
          <div class="progress-fill" id="progress-fill"></div>
        </div>
      </form>
    </div>
    <div id="upload-feedback"></div>
    <div id="result-container"></div>
  `;

    const dropZone = container.querySelector('#drop-zone') as HTMLDivElement;
    const fileInput = container.querySelector('#file-input') as HTMLInputElement;
    const selectedLabel = container.querySelector('#selected-file') as HTMLDivElement;
    const form = container.querySelector('#patient-form') as HTMLFormElement;
    const nameInput = container.querySelector('#patient-name') as HTMLInputElement;
    const sexSelect = container.querySelector('#patient-sex') as HTMLSelectElement;
    const analyseButton = container.querySelector('#analyse-button') as HTMLButtonElement;
    const progressTrack = container.querySelector('#progress-track') as HTMLDivElement;
    const progressFill = container.querySelector('#progress-fill') as HTMLDivElement;
    const feedback = container.querySelector('#upload-feedback') as HTMLDivElement;
    const resultContainer = container.querySelector('#result-container') as HTMLDivElement;

    let currentFile: File | null = null;
    let inFlight = false;

    function takeFile(file: File | null | undefined): void {
        feedback.innerHTML = '';
        if (!file) return;
        const problem = validateFile(file);
        if (problem) {
            currentFile = null;
            selectedLabel.textContent = '';
            renderError(feedback, problem);
            return;
        }
        currentFile = file;
        selectedLabel.textContent = file.name;
    }

    dropZone.addEventListener('click', () => fileInput.click());
    fileInput.addEventListener('change', () => takeFile(fileInput.files?.[0]));
    dropZone.addEventListener('dragover', (e) => {
        e.preventDefault();
        dropZone.classList.add('drag-active');
    });
    dropZone.addEventListener('dragleave', () => dropZone.classList.remove('drag-active'));
    dropZone.addEventListener('drop', (e: DragEvent) => {
        e.preventDefault();
        dropZone.classList.remove('drag-active');
        takeFile(e.dataTransfer?.files?.[0]);
    });

    async function submit(): Promise<void> {
        if (inFlight) return;
        feedback.innerHTML = '';
        if (!currentFile) {
            renderError(feedback, 'Choose a JPG or PNG photo first');
            return;
        }
        const name = nameInput.value.trim();
        if (!name) {
            renderError(feedback, 'Enter the patient name');
            return;
        }
        // re-check right before upload so an oversized file never leaves the browser
        const problem = validateFile(currentFile);
        if (problem) {
            renderError(feedback, problem);
            return;
        }

        inFlight = true;
        analyseButton.disabled = true;
        progressTrack.hidden = false;
        progressFill.style.width = '0%';
        resultContainer.innerHTML = '';
        try {
            const result = await predict(currentFile, name, sexSelect.value, (fraction) => {
                progressFill.style.width = `${Math.round(fraction * 100)}%`;
            });
            renderResult(resultContainer, result);
        } catch (err) {
            const message = err instanceof ApiError && err.status === 0
                ? 'Network failure — check the connection and retry'
                : (err as Error).message;
            renderError(resultContainer, message, () => void submit());
        } finally {
            inFlight = false;
            analyseButton.disabled = false;
            progressTrack.hidden = true;
        }
    }

    form.addEventListener('submit', (e) => {
        e.preventDefault();
        void submit();
    });
}
