declare module "dcmjs" {
  const dcmjs: {
    data: {
      DicomMessage: {
        readFile(buffer: ArrayBuffer): { meta: any; dict: any; write(): ArrayBuffer };
      };
      DicomDict: new (meta: any) => { meta: any; dict: any; write(): ArrayBuffer };
      DicomMetaDictionary: {
        naturalizeDataset(dict: any): any;
        denaturalizeDataset(dataset: any): any;
      };
    };
    log: { setLevel(level: number | string): void };
  };
  export default dcmjs;
}
